//! Reference subprocess oracle: predicts from the sum of the numeric cells
//! of each row.
//!
//! Regression: `pred = sum`. Classification: `prob = sigmoid(sum)`,
//! `pred = prob ≥ 0.5`. Flags exercise the error paths of the protocol:
//! `--bad-handshake`, `--malformed-after N`, `--short-after N`,
//! `--exit-after N` and `--wrong-id`.

use std::io::{BufRead, Write};

use serde_json::{json, Value};

struct Flags {
    task: String,
    bad_handshake: bool,
    malformed_after: Option<u64>,
    short_after: Option<u64>,
    exit_after: Option<u64>,
    wrong_id: bool,
}

fn parse_flags() -> Result<Flags, String> {
    let mut f = Flags { task: "regression".into(), bad_handshake: false, malformed_after: None, short_after: None, exit_after: None, wrong_id: false };
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        let mut count = |name: &str| -> Result<Option<u64>, String> {
            let v = args.next().ok_or(format!("{name} needs a value"))?;
            v.parse().map(Some).map_err(|_| format!("{name}: `{v}` is not a count"))
        };
        match a.as_str() {
            "--task" => f.task = args.next().ok_or("--task needs a value")?,
            "--bad-handshake" => f.bad_handshake = true,
            "--malformed-after" => f.malformed_after = count("--malformed-after")?,
            "--short-after" => f.short_after = count("--short-after")?,
            "--exit-after" => f.exit_after = count("--exit-after")?,
            "--wrong-id" => f.wrong_id = true,
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    if f.task != "classification" && f.task != "regression" {
        return Err(format!("unknown task `{}`", f.task));
    }
    Ok(f)
}

fn main() {
    let flags = match parse_flags() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("lmte-echo-oracle: {e}");
            std::process::exit(2);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let protocol = if flags.bad_handshake { "other/0" } else { "lmte-oracle/1" };
    writeln!(out, "{}", json!({ "protocol": protocol, "task": flags.task })).expect("stdout");
    out.flush().expect("stdout");
    let classify = flags.task == "classification";
    for (served, line) in (0u64..).zip(std::io::stdin().lock().lines()) {
        let Ok(line) = line else { break };
        if flags.exit_after.is_some_and(|n| served >= n) {
            break;
        }
        if flags.malformed_after.is_some_and(|n| served >= n) {
            writeln!(out, "not json").expect("stdout");
            out.flush().expect("stdout");
            continue;
        }
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("lmte-echo-oracle: bad request: {e}");
                std::process::exit(1);
            }
        };
        let id = req["id"].as_u64().unwrap_or(0);
        let rows = req["rows"].as_array().cloned().unwrap_or_default();
        let sums: Vec<f64> = rows
            .iter()
            .map(|r| r.as_array().map_or(0.0, |cells| cells.iter().filter_map(Value::as_f64).sum()))
            .collect();
        let keep = if flags.short_after.is_some_and(|n| served >= n) { sums.len().saturating_sub(1) } else { sums.len() };
        let sums = &sums[..keep];
        let id = if flags.wrong_id { id + 1000 } else { id };
        let reply = if classify {
            let probs: Vec<f64> = sums.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
            let preds: Vec<f64> = probs.iter().map(|&p| f64::from(u8::from(p >= 0.5))).collect();
            json!({ "id": id, "preds": preds, "probs": probs })
        } else {
            json!({ "id": id, "preds": sums })
        };
        writeln!(out, "{reply}").expect("stdout");
        out.flush().expect("stdout");
    }
}
