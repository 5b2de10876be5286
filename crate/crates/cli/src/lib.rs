//! `lmte` command-line front end.
//!
//! Settings come from three places, highest precedence first: command-line
//! flags, the `--config` JSON file, built-in defaults.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lmte_core::explain::{generate_neighborhood, make_oracle, render_text, SessionConfig};
use lmte_core::tabular::{write_csv, Column, Dataset, Schema};
use lmte_eval::{run_experiment, ExperimentConfig};
use lmte_service::{LiveSession, ServiceConfig, SessionSpec, Snapshot};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "lmte", version, about = "Local explanations with GAN neighborhoods and linear model trees")]
pub struct Cli {
    /// Master seed; fixes every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config file (see docs/config.md).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for `eval` (results do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one test point.
    Explain(ExplainArgs),
    /// Re-route a saved explanation with feature overrides.
    Whatif(WhatIfArgs),
    /// Write the labeled synthetic neighborhood of a test point.
    Sample(SampleArgs),
    /// Run an experiment design.
    Eval(EvalArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Write the bundled datasets as CSV plus schema sidecars.
    FetchData(FetchArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Training CSV.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Schema JSON; defaults to the CSV's `.schema.json` sidecar.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Columns to drop from the CSV (e.g. the label).
    #[arg(long = "drop", value_delimiter = ',')]
    pub drop: Vec<String>,
    /// Oracle spec: inline JSON or a path to a JSON file.
    #[arg(long)]
    pub oracle: Option<String>,
    /// Test point: a JSON file, or inline JSON array/object.
    #[arg(long)]
    pub point: Option<String>,
    /// Nearest neighbors forming the locality.
    #[arg(long)]
    pub k: Option<usize>,
    /// Synthetic rows generated.
    #[arg(long)]
    pub samples: Option<usize>,
    /// GAN training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Attributions shown in the text rendering.
    #[arg(long, default_value_t = lmte_core::explain::DEFAULT_TOP_N)]
    pub top: usize,
    /// Save the fitted session for `whatif`.
    #[arg(long)]
    pub save_session: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WhatIfArgs {
    /// Session file written by `explain --save-session`.
    #[arg(long)]
    pub session: PathBuf,
    /// Override `name=value`; repeatable.
    #[arg(long = "set")]
    pub set: Vec<String>,
    /// Overrides as a JSON object, inline or a file path.
    #[arg(long)]
    pub overrides: Option<String>,
    #[arg(long, default_value_t = lmte_core::explain::DEFAULT_TOP_N)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Design id: fig3, table2 ... table6.
    #[arg(long)]
    pub design: Option<String>,
    /// Bundled dataset id or file stem under --data-dir.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Test points explained.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on.
    #[arg(long)]
    pub bind: Option<String>,
    /// Persist sessions as JSON snapshots here.
    #[arg(long)]
    pub snapshot_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long, default_value = "data")]
    pub dir: PathBuf,
}

/// Contents of the `--config` file. An `eval` config may also be a bare
/// experiment config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub drop_columns: Vec<String>,
    pub oracle: Option<Value>,
    pub session: Option<SessionConfig>,
    pub experiment: Option<ExperimentConfig>,
    pub service: Option<ServiceConfig>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] lmte_core::Error),
    #[error(transparent)]
    Eval(#[from] lmte_eval::Error),
    #[error(transparent)]
    Service(#[from] lmte_service::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            _ => "runtime",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            match cli.format {
                Format::Json => eprintln!("{}", json!({ "error": { "code": e.code(), "message": e.to_string() } })),
                Format::Text => {
                    eprintln!("error: {e}");
                    if e.exit_code() == 2 {
                        eprintln!("Run `lmte --help` for usage.");
                    }
                }
            }
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let file = load_file_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Explain(a) => explain(cli, &file, a),
        Command::Whatif(a) => whatif(cli, a),
        Command::Sample(a) => sample(cli, &file, a),
        Command::Eval(a) => eval(cli, a),
        Command::Serve(a) => serve(cli, &file, a),
        Command::FetchData(a) => fetch_data(cli, a),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn existing(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} `{}` does not exist", path.display())))
    }
}

fn read_json(path: &Path, what: &str) -> Result<Value> {
    existing(path, what)?;
    serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| usage(format!("{what} `{}`: {e}", path.display())))
}

/// Inline JSON (starting with `{` or `[`) or the contents of a JSON file.
fn inline_or_file(arg: &str, what: &str) -> Result<Value> {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        serde_json::from_str(t).map_err(|e| usage(format!("{what}: {e}")))
    } else {
        read_json(Path::new(arg), what)
    }
}

fn load_file_config(path: Option<&Path>) -> Result<Value> {
    match path {
        Some(p) => read_json(p, "config file"),
        None => Ok(Value::Object(Map::new())),
    }
}

fn sectioned(file: &Value) -> Result<FileConfig> {
    serde_json::from_value(file.clone()).map_err(|e| usage(format!("config file: {e}")))
}

fn session_spec(cli: &Cli, file: &Value, input: &InputArgs) -> Result<SessionSpec> {
    let file = sectioned(file)?;
    let point = match &input.point {
        Some(p) => inline_or_file(p, "test point")?,
        None => return Err(usage("no test point: pass --point")),
    };
    let train = input.train.clone().or(file.train).ok_or_else(|| usage("no training CSV: pass --train or set `train` in the config"))?;
    existing(&train, "training CSV")?;
    let schema_path = input.schema.clone().or(file.schema);
    if let Some(p) = &schema_path {
        existing(p, "schema file")?;
    }
    let oracle_spec = match &input.oracle {
        Some(s) => inline_or_file(s, "oracle spec")?,
        None => file.oracle.ok_or_else(|| usage("no oracle: pass --oracle or set `oracle` in the config"))?,
    };
    let mut config = file.session.unwrap_or_default();
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(k) = input.k {
        config.k = k;
    }
    if let Some(n) = input.samples {
        config.n_synthetic = n;
    }
    if let Some(e) = input.epochs {
        config.gan.epochs = e;
    }
    let drop_columns = if input.drop.is_empty() { file.drop_columns } else { input.drop.clone() };
    Ok(SessionSpec { train_csv_path: train, schema_path, drop_columns, oracle_spec, config, point: Some(point) })
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn explain(cli: &Cli, file: &Value, a: &ExplainArgs) -> Result<()> {
    let spec = session_spec(cli, file, &a.input)?;
    let live = LiveSession::create("cli".into(), spec, &lmte_eval::registry())?;
    let e = live.explain(None, false)?;
    if let Some(p) = &a.save_session {
        std::fs::write(p, serde_json::to_vec(&live.snapshot())?)?;
    }
    match cli.format {
        Format::Json => emit(cli, &pretty(&e)?),
        Format::Text => emit(cli, &render_text(&e, a.top)),
    }
}

fn parse_set(s: &str) -> Result<(String, Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("--set expects name=value, got `{s}`")))?;
    let value = match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => json!(v),
    };
    Ok((k.trim().to_string(), value))
}

fn whatif(cli: &Cli, a: &WhatIfArgs) -> Result<()> {
    let snap: Snapshot = serde_json::from_value(read_json(&a.session, "session file")?).map_err(|e| usage(format!("session file: {e}")))?;
    let mut overrides = match &a.overrides {
        Some(o) => match inline_or_file(o, "overrides")? {
            Value::Object(m) => m,
            _ => return Err(usage("overrides must be a JSON object")),
        },
        None => Map::new(),
    };
    for s in &a.set {
        let (k, v) = parse_set(s)?;
        overrides.insert(k, v);
    }
    if overrides.is_empty() {
        return Err(usage("no overrides: pass --set name=value or --overrides"));
    }
    let live = LiveSession::restore(snap, &lmte_eval::registry())?;
    let e = live.what_if(None, &overrides)?;
    match cli.format {
        Format::Json => emit(cli, &pretty(&e)?),
        Format::Text => emit(cli, &render_text(&e, a.top)),
    }
}

fn sample(cli: &Cli, file: &Value, a: &SampleArgs) -> Result<()> {
    let spec = session_spec(cli, file, &a.input)?;
    let train = spec.load_train()?;
    let oracle = make_oracle(&spec.oracle_spec, &lmte_eval::registry(), &train.schema)?;
    let point = train.schema.row_from_json(spec.point.as_ref().expect("checked"))?;
    let n = generate_neighborhood(&train, &point, oracle.as_ref(), &spec.config)?;
    match cli.format {
        Format::Json => emit(
            cli,
            &pretty(&json!({
                "provenance": n.provenance,
                "columns": n.rows.schema.columns.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
                "rows": n.rows.to_json_rows(),
                "labels": n.labels,
                "probs": n.probs,
            }))?,
        ),
        Format::Text => {
            let mut columns = n.rows.schema.columns.clone();
            columns.push(Column::numerical("label"));
            let mut cells = n.rows.cells.clone();
            let mut extra = vec![n.labels.clone()];
            if let Some(p) = &n.probs {
                columns.push(Column::numerical("prob"));
                extra.push(p.clone());
            }
            for col in extra {
                cells.push_column(ndarray::ArrayView1::from(&col)).expect("one value per row");
            }
            let data = Dataset::new(Schema { columns }, cells)?;
            let mut buf = Vec::new();
            write_csv(&data, &mut buf)?;
            emit(cli, &String::from_utf8(buf).expect("csv is utf-8"))
        }
    }
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => {
            let v = read_json(p, "config file")?;
            let section = match v.get("experiment") {
                Some(s) => s.clone(),
                None => v,
            };
            serde_json::from_value::<ExperimentConfig>(section).map_err(|e| usage(format!("experiment config: {e}")))?
        }
        None => ExperimentConfig::default(),
    };
    if cli.config.is_none() && a.design.is_none() {
        return Err(usage("no experiment: pass --config or --design"));
    }
    if let Some(d) = &a.design {
        config.design = d.clone();
    }
    if let Some(d) = &a.dataset {
        config.dataset = d.clone();
    }
    if let Some(d) = &a.data_dir {
        config.data_dir = Some(d.clone());
    }
    if let Some(n) = a.points {
        config.n_points = Some(n);
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(j) = cli.jobs {
        config.jobs = j.max(1);
    }
    let report = run_experiment(&config)?;
    match cli.format {
        Format::Json => emit(cli, &pretty(&report)?),
        Format::Text => emit(cli, &report.render_text()),
    }
}

fn serve(cli: &Cli, file: &Value, a: &ServeArgs) -> Result<()> {
    let mut config = sectioned(file)?.service.unwrap_or_default();
    if let Some(b) = &a.bind {
        config.bind = b.clone();
    }
    if let Some(d) = &a.snapshot_dir {
        config.snapshot_dir = Some(d.clone());
    }
    if let Some(s) = cli.seed {
        for spec in &mut config.sessions {
            spec.config.seed = s;
        }
    }
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("listening on {}", config.bind);
    runtime.block_on(lmte_service::serve(config, lmte_eval::registry()))?;
    Ok(())
}

fn fetch_data(cli: &Cli, a: &FetchArgs) -> Result<()> {
    lmte_eval::datasets::write_bundled(&a.dir)?;
    let files: Vec<String> = lmte_eval::datasets::BUNDLED_IDS
        .iter()
        .flat_map(|id| [format!("{id}.csv"), format!("{id}.schema.json")])
        .map(|f| a.dir.join(f).display().to_string())
        .collect();
    match cli.format {
        Format::Json => emit(cli, &pretty(&json!({ "written": files }))?),
        Format::Text => emit(cli, &(files.join("\n") + "\n")),
    }
}
