//! Access to the target model through prediction calls only.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lmt::Task;
use crate::tabular::{Dataset, Schema};

pub const PROTOCOL: &str = "lmte-oracle/1";

/// One prediction per row. For classification `preds` holds class indices
/// and `probs` the class-1 probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub preds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    /// Builds classification output from class-1 probabilities.
    pub fn from_probabilities(probs: Vec<f64>) -> Self {
        Predictions { preds: probs.iter().map(|&p| f64::from(u8::from(p >= 0.5))).collect(), probs: Some(probs) }
    }

    fn check(self, task: Task, rows: usize) -> Result<Self> {
        if self.preds.len() != rows {
            return Err(Error::Oracle(format!("expected {rows} predictions, got {}", self.preds.len())));
        }
        if self.preds.iter().any(|v| !v.is_finite()) {
            return Err(Error::Oracle("non-finite prediction".into()));
        }
        if let Some(p) = &self.probs {
            if p.len() != rows {
                return Err(Error::Oracle(format!("expected {rows} probabilities, got {}", p.len())));
            }
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Oracle("probability outside [0, 1]".into()));
            }
        }
        if task == Task::Classification && self.preds.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Oracle("classification predictions must be 0 or 1".into()));
        }
        Ok(self)
    }
}

/// The black-box target model.
pub trait Oracle: Send + Sync {
    fn task(&self) -> Task;
    fn predict_raw(&self, data: &Dataset) -> Result<Predictions>;

    /// Predicts and validates the reply shape.
    fn predict(&self, data: &Dataset) -> Result<Predictions> {
        self.predict_raw(data)?.check(self.task(), data.n_rows())
    }
}

type PredictFn = dyn Fn(&Dataset) -> Result<Predictions> + Send + Sync;

/// Oracle backed by a Rust closure.
pub struct FnOracle {
    task: Task,
    f: Box<PredictFn>,
}

impl FnOracle {
    pub fn new(task: Task, f: impl Fn(&Dataset) -> Result<Predictions> + Send + Sync + 'static) -> Self {
        FnOracle { task, f: Box::new(f) }
    }

    /// Classifier or regressor returning `value` for every row.
    pub fn constant(task: Task, value: f64) -> Self {
        FnOracle::new(task, move |d| {
            Ok(match task {
                Task::Classification => Predictions { preds: vec![value; d.n_rows()], probs: Some(vec![value; d.n_rows()]) },
                Task::Regression => Predictions { preds: vec![value; d.n_rows()], probs: None },
            })
        })
    }
}

impl Oracle for FnOracle {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_raw(&self, data: &Dataset) -> Result<Predictions> {
        (self.f)(data)
    }
}

/// How to reach an oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleSpec {
    InProcess {
        name: String,
        task: Task,
        #[serde(default)]
        params: Value,
    },
    Subprocess {
        command: Vec<String>,
        task: Task,
    },
    Http {
        url: String,
        task: Task,
    },
}

impl OracleSpec {
    pub fn task(&self) -> Task {
        match self {
            OracleSpec::InProcess { task, .. } | OracleSpec::Subprocess { task, .. } | OracleSpec::Http { task, .. } => *task,
        }
    }
}

type Factory = dyn Fn(Task, &Value, &Schema) -> Result<Arc<dyn Oracle>> + Send + Sync;

/// Named in-process model factories.
#[derive(Clone)]
pub struct OracleRegistry {
    factories: BTreeMap<String, Arc<Factory>>,
}

impl Default for OracleRegistry {
    /// Holds `constant` (`params.value`, default 0).
    fn default() -> Self {
        let mut r = OracleRegistry { factories: BTreeMap::new() };
        r.register("constant", |task, params, _| {
            let value = params.get("value").and_then(Value::as_f64).unwrap_or(0.0);
            Ok(Arc::new(FnOracle::constant(task, value)))
        });
        r
    }
}

impl OracleRegistry {
    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(Task, &Value, &Schema) -> Result<Arc<dyn Oracle>> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn make(&self, spec: &OracleSpec, schema: &Schema) -> Result<Arc<dyn Oracle>> {
        match spec {
            OracleSpec::InProcess { name, task, params } => {
                let f = self
                    .factories
                    .get(name)
                    .ok_or_else(|| Error::Oracle(format!("no in-process model named `{name}` (known: {:?})", self.names())))?;
                f(*task, params, schema)
            }
            OracleSpec::Subprocess { command, task } => Ok(Arc::new(SubprocessOracle::spawn(command, *task)?)),
            OracleSpec::Http { url, task } => Ok(Arc::new(HttpOracle::new(url, *task))),
        }
    }
}

/// Parses an oracle spec and builds it against `registry`.
pub fn make_oracle(spec: &Value, registry: &OracleRegistry, schema: &Schema) -> Result<Arc<dyn Oracle>> {
    let spec: OracleSpec = serde_json::from_value(spec.clone()).map_err(|e| Error::Oracle(format!("bad oracle spec: {e}")))?;
    registry.make(&spec, schema)
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    rows: &'a [Value],
}

#[derive(Deserialize)]
struct Response {
    id: Option<u64>,
    preds: Vec<f64>,
    #[serde(default)]
    probs: Option<Vec<f64>>,
}

fn request_rows(data: &Dataset) -> Vec<Value> {
    data.rows().map(|r| data.schema.row_to_json(r)).collect()
}

#[derive(Deserialize)]
struct Handshake {
    protocol: String,
    task: Task,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

/// External process speaking newline-delimited JSON on stdin/stdout.
pub struct SubprocessOracle {
    task: Task,
    pipe: Mutex<Pipe>,
}

impl SubprocessOracle {
    pub fn spawn(command: &[String], task: Task) -> Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| Error::Oracle("empty oracle command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Oracle(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        let read = stdout.read_line(&mut line);
        let shake = match read {
            Ok(0) | Err(_) => None,
            Ok(_) => serde_json::from_str::<Handshake>(line.trim()).ok(),
        };
        let Some(shake) = shake else {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Oracle(format!("handshake failed: expected a protocol line, got `{}`", line.trim())));
        };
        if shake.protocol != PROTOCOL || shake.task != task {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Oracle(format!(
                "handshake failed: oracle speaks `{}` for {:?}, expected `{PROTOCOL}` for {task:?}",
                shake.protocol, shake.task
            )));
        }
        Ok(SubprocessOracle { task, pipe: Mutex::new(Pipe { child, stdin, stdout, next_id: 0 }) })
    }
}

impl Oracle for SubprocessOracle {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_raw(&self, data: &Dataset) -> Result<Predictions> {
        let mut pipe = self.pipe.lock().map_err(|_| Error::Oracle("oracle pipe poisoned".into()))?;
        let id = pipe.next_id;
        pipe.next_id += 1;
        let rows = request_rows(data);
        let mut line = serde_json::to_string(&Request { id, rows: &rows })?;
        line.push('\n');
        pipe.stdin.write_all(line.as_bytes()).and_then(|_| pipe.stdin.flush()).map_err(|e| Error::Oracle(format!("oracle closed its input: {e}")))?;
        let mut reply = String::new();
        match pipe.stdout.read_line(&mut reply) {
            Ok(0) => return Err(Error::Oracle("oracle exited without replying".into())),
            Err(e) => return Err(Error::Oracle(format!("cannot read oracle reply: {e}"))),
            Ok(_) => {}
        }
        let resp: Response =
            serde_json::from_str(reply.trim()).map_err(|e| Error::Oracle(format!("malformed oracle reply: {e}")))?;
        if resp.id.is_some_and(|r| r != id) {
            return Err(Error::Oracle(format!("reply id {:?} does not match request id {id}", resp.id)));
        }
        Ok(Predictions { preds: resp.preds, probs: resp.probs })
    }
}

impl Drop for SubprocessOracle {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}

/// Oracle served over HTTP: `POST {url}/predict` with the NDJSON request body.
pub struct HttpOracle {
    task: Task,
    endpoint: String,
    next_id: Mutex<u64>,
}

impl HttpOracle {
    pub fn new(url: &str, task: Task) -> Self {
        let base = url.trim_end_matches('/');
        let endpoint = if base.ends_with("/predict") { base.to_string() } else { format!("{base}/predict") };
        HttpOracle { task, endpoint, next_id: Mutex::new(0) }
    }
}

impl Oracle for HttpOracle {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_raw(&self, data: &Dataset) -> Result<Predictions> {
        let id = {
            let mut n = self.next_id.lock().map_err(|_| Error::Oracle("oracle state poisoned".into()))?;
            *n += 1;
            *n - 1
        };
        let body = json!({ "id": id, "rows": request_rows(data) });
        let mut resp = ureq::post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| Error::Oracle(format!("POST {} failed: {e}", self.endpoint)))?;
        let resp: Response =
            resp.body_mut().read_json().map_err(|e| Error::Oracle(format!("malformed oracle reply: {e}")))?;
        if resp.id.is_some_and(|r| r != id) {
            return Err(Error::Oracle(format!("reply id {:?} does not match request id {id}", resp.id)));
        }
        Ok(Predictions { preds: resp.preds, probs: resp.probs })
    }
}
