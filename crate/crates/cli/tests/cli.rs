use std::path::Path;
use std::process::{Command, Output};

use lmte_core::explain::{Explanation, Session, SessionConfig};
use lmte_core::tabular::Schema;
use lmte_eval::datasets::bundled;
use serde_json::{json, Value};

fn lmte(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmte")).current_dir(dir).args(args).output().unwrap()
}

fn forest_oracle() -> String {
    json!({ "kind": "in-process", "name": "reference-forest", "task": "classification", "params": { "dataset": "two_moons" } })
        .to_string()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = lmte(dir.path(), &["fetch-data", "--dir", "data"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(dir.path().join("point.json"), "[0.5, 0.25]").unwrap();
    dir
}

fn explain_args<'a>(oracle: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["explain", "--train", "data/two_moons.csv", "--drop", "target", "--oracle", oracle, "--point", "point.json", "--epochs", "80"];
    v.extend_from_slice(extra);
    v
}

#[test]
fn explain_matches_module_calls_and_is_reproducible() {
    let dir = setup();
    let oracle = forest_oracle();
    let out = lmte(dir.path(), &explain_args(&oracle, &["--seed", "4", "--out", "a.json"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let again = lmte(dir.path(), &explain_args(&oracle, &["--seed", "4", "--out", "b.json"]));
    assert!(again.status.success());
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());

    let e: Explanation = serde_json::from_slice(&a).unwrap();
    assert!(!e.context.is_empty(), "boundary point should get a non-empty context");

    let d = bundled("two_moons").unwrap();
    let registry = lmte_eval::registry();
    let spec = serde_json::from_str(&oracle).unwrap();
    let forest = lmte_core::explain::make_oracle(&spec, &registry, &d.features.schema).unwrap();
    let mut config = SessionConfig { seed: 4, ..SessionConfig::default() };
    config.gan.epochs = 80;
    let direct = Session::run(&d.features, &[0.5, 0.25], forest.as_ref(), &config).unwrap();
    assert_eq!(e, direct.explanation);
}

#[test]
fn text_output_and_whatif_round_trip() {
    let dir = setup();
    let oracle = forest_oracle();
    let out = lmte(dir.path(), &explain_args(&oracle, &["--format", "text", "--save-session", "s.json"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Context") && text.contains("attribution"), "{text}");

    let out = lmte(dir.path(), &["whatif", "--session", "s.json", "--set", "x1=2.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let e: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(e["leaf_changed"].is_boolean());
    assert_eq!(e["point"][0]["value"], json!(2.0));

    let out = lmte(dir.path(), &["whatif", "--session", "s.json", "--overrides", r#"{"x9": 1}"#]);
    assert_eq!(out.status.code(), Some(1));
    let out = lmte(dir.path(), &["whatif", "--session", "s.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let dir = setup();
    let oracle = forest_oracle();
    let mut args = explain_args(&oracle, &[]);
    let i = args.iter().position(|a| *a == "point.json").unwrap();
    args[i] = "missing.json";
    let out = lmte(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"]["code"], "usage");
    assert!(err["error"]["message"].as_str().unwrap().contains("missing.json"));

    args.extend(["--format", "text"]);
    let out = lmte(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage"));

    assert_eq!(lmte(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(lmte(dir.path(), &["explain", "--k", "many"]).status.code(), Some(2));
    assert_eq!(lmte(dir.path(), &["eval"]).status.code(), Some(2));
    assert_eq!(lmte(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = setup();
    let bad = json!({ "kind": "in-process", "name": "svm", "task": "classification" }).to_string();
    let out = lmte(dir.path(), &explain_args(&bad, &[]));
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"]["code"], "runtime");
    let out = lmte(dir.path(), &["eval", "--design", "table2", "--dataset", "iris"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sample_writes_the_labeled_neighborhood() {
    let dir = setup();
    let oracle = forest_oracle();
    let mut args = explain_args(&oracle, &["--samples", "40", "--format", "text"]);
    args[0] = "sample";
    let out = lmte(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,label,prob"));
    assert_eq!(lines.count(), 40);

    args.truncate(args.len() - 2);
    let out = lmte(dir.path(), &args);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 40);
    assert_eq!(v["provenance"]["sampler"], "ctgan");
}

#[test]
fn eval_reads_config_and_flags_override() {
    let dir = setup();
    let config = json!({
        "experiment": {
            "design": "table3",
            "dataset": "friedman",
            "n_points": 1,
            "gan": { "epochs": 30 },
            "target": { "kind": "forest", "n_trees": 10 }
        }
    });
    std::fs::write(dir.path().join("table3.json"), config.to_string()).unwrap();
    let out = lmte(dir.path(), &["eval", "--config", "table3.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let metrics: Vec<&str> = report["metrics"].as_array().unwrap().iter().map(|m| m.as_str().unwrap()).collect();
    assert!(metrics.iter().any(|m| m.contains("ctgan")) && metrics.iter().any(|m| m.contains("urs")));

    let out = lmte(dir.path(), &["eval", "--config", "table3.json", "--design", "table2", "--format", "text"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("Table2"));
}

#[test]
fn fetch_data_writes_schema_sidecars() {
    let dir = setup();
    let schema = Schema::load(&dir.path().join("data/credit.schema.json")).unwrap();
    assert!(schema.columns.iter().any(|c| c.is_categorical()));
}
