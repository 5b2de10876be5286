use super::*;
use crate::lmt::{LeafKind, LeafModel, LinearModelTree, LmtConfig, Node, Task};
use crate::tabular::{Column, Dataset, Schema};
use ndarray::{array, Array1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use std::sync::Arc;

fn mixed_train(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = Schema::new(vec![
        Column::numerical("x1"),
        Column::numerical("x2"),
        Column::categorical("color", ["red", "green", "blue"]),
    ])
    .unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(0.0..10.0), f64::from(rng.random_range(0..3u8))])
        .collect();
    Dataset::from_rows(schema, &rows).unwrap()
}

fn linear_oracle() -> FnOracle {
    FnOracle::new(Task::Regression, |d| {
        Ok(Predictions { preds: d.rows().map(|r| 2.0 * r[0] - 0.5 * r[1] + 1.0).collect(), probs: None })
    })
}

fn threshold_oracle() -> FnOracle {
    FnOracle::new(Task::Classification, |d| {
        Ok(Predictions::from_probabilities(d.rows().map(|r| if r[0] + 0.3 * r[1] > 1.5 { 0.9 } else { 0.1 }).collect()))
    })
}

fn sh_oracle(script: &str, task: Task) -> Result<SubprocessOracle, crate::Error> {
    SubprocessOracle::spawn(&["sh".into(), "-c".into(), script.into()], task)
}

#[test]
fn constant_in_process_oracle() {
    let data = mixed_train(3, 1);
    let registry = OracleRegistry::default();
    let spec = json!({"kind": "in-process", "name": "constant", "task": "classification"});
    let oracle = make_oracle(&spec, &registry, &data.schema).unwrap();
    assert_eq!(oracle.predict(&data).unwrap().preds, vec![0.0, 0.0, 0.0]);
    assert!(make_oracle(&json!({"kind": "in-process", "name": "nope", "task": "regression"}), &registry, &data.schema).is_err());
    assert!(make_oracle(&json!({"kind": "carrier-pigeon"}), &registry, &data.schema).is_err());
}

#[test]
fn prediction_count_mismatch_is_an_error() {
    let data = mixed_train(3, 2);
    let short = FnOracle::new(Task::Regression, |_| Ok(Predictions { preds: vec![1.0, 2.0], probs: None }));
    assert!(matches!(short.predict(&data), Err(crate::Error::Oracle(m)) if m.contains("expected 3")));
    let bad_prob = FnOracle::new(Task::Classification, |d| Ok(Predictions { preds: vec![1.0; d.n_rows()], probs: Some(vec![1.5; d.n_rows()]) }));
    assert!(bad_prob.predict(&data).is_err());
    let non_binary = FnOracle::new(Task::Classification, |d| Ok(Predictions { preds: vec![2.0; d.n_rows()], probs: None }));
    assert!(non_binary.predict(&data).is_err());
}

#[test]
fn subprocess_protocol_paths() {
    let data = mixed_train(3, 3);
    let ok = sh_oracle(
        r#"echo '{"protocol":"lmte-oracle/1","task":"regression"}'; while read l; do echo '{"id":0,"preds":[1,2,3]}'; done"#,
        Task::Regression,
    )
    .unwrap();
    assert_eq!(ok.predict(&data).unwrap().preds, vec![1.0, 2.0, 3.0]);
    // second request carries id 1, reply says 0
    assert!(ok.predict(&data).is_err());

    let wrong_task = sh_oracle(r#"echo '{"protocol":"lmte-oracle/1","task":"classification"}'; cat"#, Task::Regression);
    assert!(matches!(wrong_task, Err(crate::Error::Oracle(m)) if m.contains("handshake")));
    let garbage = sh_oracle("echo hello; cat", Task::Regression);
    assert!(matches!(garbage, Err(crate::Error::Oracle(m)) if m.contains("handshake")));
    let silent = sh_oracle("exit 0", Task::Regression);
    assert!(silent.is_err());

    let malformed = sh_oracle(r#"echo '{"protocol":"lmte-oracle/1","task":"regression"}'; read l; echo '{"preds": "x"}'"#, Task::Regression).unwrap();
    assert!(matches!(malformed.predict(&data), Err(crate::Error::Oracle(m)) if m.contains("malformed")));
    let short = sh_oracle(r#"echo '{"protocol":"lmte-oracle/1","task":"regression"}'; read l; echo '{"id":0,"preds":[1,2]}'"#, Task::Regression).unwrap();
    assert!(short.predict(&data).is_err());
    let dies = sh_oracle(r#"echo '{"protocol":"lmte-oracle/1","task":"regression"}'; read l"#, Task::Regression).unwrap();
    assert!(dies.predict(&data).is_err());
}

#[test]
fn neighborhood_defaults_and_determinism() {
    let train = mixed_train(200, 4);
    let oracle = threshold_oracle();
    let x_t = train.row(0).to_vec();
    let config = SessionConfig { seed: 7, ..SessionConfig::default() };
    let a = generate_neighborhood(&train, &x_t, &oracle, &config).unwrap();
    assert_eq!(a.len(), 500);
    assert_eq!(a.rows.n_rows(), 500);
    assert_eq!(a.provenance.k, 20);
    for row in a.rows.rows() {
        train.schema.check_row(row).unwrap();
    }
    let b = generate_neighborhood(&train, &x_t, &oracle, &config).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = generate_neighborhood(&train, &x_t, &oracle, &SessionConfig { seed: 8, ..config.clone() }).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn k_equal_to_training_size_is_global() {
    let train = mixed_train(40, 5);
    let cfg = SessionConfig { k: 40, n_synthetic: 60, gan: crate::ctgan::CtganConfig { epochs: 20, ..Default::default() }, ..Default::default() };
    let n = generate_neighborhood(&train, train.row(3), &threshold_oracle(), &cfg).unwrap();
    assert_eq!(n.len(), 60);
    assert!(generate_neighborhood(&train, train.row(3), &threshold_oracle(), &SessionConfig { k: 41, ..cfg }).is_err());
}

#[test]
fn linear_oracle_coefficients_are_recovered() {
    let train = mixed_train(200, 6);
    let oracle = linear_oracle();
    let x_t = train.row(5).to_vec();
    let session = Session::run(&train, &x_t, &oracle, &SessionConfig { seed: 1, ..Default::default() }).unwrap();
    let e = &session.explanation;
    // coefficients are per standardized unit; divide by the scale to compare
    // with the raw-unit truth
    let scales: Vec<f64> = session.surrogate.encoder.stats.iter().flatten().map(|s| s.1).collect();
    let got = [e.attributions[0].coefficient / scales[0], e.attributions[1].coefficient / scales[1]];
    let truth = [2.0, -0.5];
    let cos = (got[0] * truth[0] + got[1] * truth[1])
        / ((got[0].powi(2) + got[1].powi(2)).sqrt() * (truth[0].powi(2) + truth[1].powi(2)).sqrt());
    assert!(cos.abs() >= 0.99, "cosine {cos}, got {got:?}");
    assert!(e.oracle.as_ref().unwrap().agrees);
    assert!(e.fidelity < 0.05);
}

#[test]
fn explanation_invariants() {
    let train = mixed_train(200, 7);
    let oracle = threshold_oracle();
    for i in [0, 10, 20] {
        let x_t = train.row(i).to_vec();
        let s = Session::run(&train, &x_t, &oracle, &SessionConfig { seed: i as u64, ..Default::default() }).unwrap();
        let e = &s.explanation;
        assert!(e.context.is_satisfied_by(s.schema(), &x_t));
        assert_eq!(e.attributions.len(), s.surrogate.encoder.width);
        let enc = s.surrogate.encoder.encode_row(&x_t).unwrap();
        let leaf = s.surrogate.tree.leaf(e.leaf_id).unwrap();
        let total: f64 = e.attributions.iter().map(|a| a.value).sum::<f64>() + e.intercept;
        assert!((total - leaf.decision(Array1::from(enc).view())).abs() < 1e-9);
        assert!(e.fidelity >= 0.0 && e.fidelity <= 1.0);

        let mut o = Map::new();
        o.insert("x1".into(), json!(x_t[0] + 2.5));
        o.insert("color".into(), json!("blue"));
        let w = s.what_if(&o, Some(&oracle)).unwrap();
        let moved = apply_overrides(s.schema(), &x_t, &o).unwrap();
        assert!(w.context.is_satisfied_by(s.schema(), &moved));
    }
}

#[test]
fn pipeline_is_deterministic() {
    let train = mixed_train(150, 8);
    let oracle = threshold_oracle();
    let cfg = SessionConfig { seed: 3, ..Default::default() };
    let a = Session::run(&train, train.row(1), &oracle, &cfg).unwrap();
    let b = Session::run(&train, train.row(1), &oracle, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn depth_zero_surrogate_has_empty_context() {
    let train = mixed_train(120, 9);
    let cfg = SessionConfig { lmt: Some(LmtConfig { max_depth: 0, ..LmtConfig::classification() }), ..Default::default() };
    let s = Session::run(&train, train.row(2), &threshold_oracle(), &cfg).unwrap();
    assert!(s.explanation.context.is_empty());
    assert_eq!(s.explanation.leaf_id, 0);
    assert!(render_text(&s.explanation, 5).contains("(always true)"));
}

#[test]
fn too_small_neighborhood_is_a_config_error() {
    let train = mixed_train(60, 10);
    let cfg = SessionConfig { n_synthetic: 5, gan: crate::ctgan::CtganConfig { epochs: 2, ..Default::default() }, ..Default::default() };
    match Session::run(&train, train.row(0), &threshold_oracle(), &cfg) {
        Err(crate::Error::Config(m)) => assert!(m.contains("n_synthetic")),
        other => panic!("expected config error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn probability_labels_fit_a_regression_surrogate() {
    let train = mixed_train(150, 11);
    let cfg = SessionConfig { label_mode: LabelMode::Probability, ..Default::default() };
    let s = Session::run(&train, train.row(4), &threshold_oracle(), &cfg).unwrap();
    assert_eq!(s.surrogate.tree.config.task, Task::Regression);
    assert_eq!(s.explanation.task, Task::Classification);
    assert!((0.0..=1.0).contains(&s.explanation.fidelity));
}

/// Surrogate over the credit-style running example: a root split on the
/// number of recently opened accounts, then on utilization.
fn credit_surrogate() -> Surrogate {
    let names = ["acc_open_past_24mths", "all_util", "annual_inc", "dti", "revol_bal", "int_rate"];
    let schema = Schema::new(names.iter().map(|n| Column::numerical(*n)).collect()).unwrap();
    let encoder = SurrogateEncoder { schema, stats: vec![Some((0.0, 1.0)); 6], width: 6 };
    let leaf = |w: [f64; 6], b: f64| Node::Leaf {
        model: LeafModel { kind: LeafKind::Logistic, weights: Array1::from(w.to_vec()), intercept: b, loss: 1.0, n_rows: 30 },
    };
    let tree = LinearModelTree::from_nodes(
        vec![
            Node::Split { feature: 0, threshold: 3.5, left: 1, right: 2 },
            leaf([0.1, 0.02, -0.01, 0.03, 0.0, 0.2], -1.0),
            Node::Split { feature: 1, threshold: 81.4, left: 3, right: 4 },
            leaf([0.05, -0.03, 0.00001, 0.08, 0.00002, 0.4], 0.5),
            leaf([0.3, 0.09, -0.00002, -0.01, 0.00001, 0.02], -2.0),
        ],
        6,
        LmtConfig::classification(),
    )
    .unwrap();
    Surrogate { encoder, tree, task: Task::Classification, label_mode: LabelMode::Hard, fidelity: 0.97, label_sd: 0.5 }
}

#[test]
fn running_example_context_and_what_if() {
    let s = credit_surrogate();
    let x_t = [24.0, 78.0, 65000.0, 18.0, 12000.0, 13.5];
    let e = s.explain(&x_t, None).unwrap();
    let text = render_text(&e, 5);
    assert!(text.contains("acc_open_past_24mths > 3.5"), "{text}");
    assert!(text.contains("all_util ≤ 81.4"), "{text}");
    let table_rows = text.lines().skip_while(|l| !l.starts_with("Top")).skip(2).count();
    assert_eq!(table_rows, 5);
    let top: Vec<String> = top_attributions(&e, 5).into_iter().map(|r| r.feature).collect();

    let mut o = Map::new();
    o.insert("all_util".into(), json!(90.0));
    let w = s.what_if(&x_t, &o, None).unwrap();
    assert_eq!(w.leaf_changed, Some(true));
    assert!(w.context.conditions.iter().any(|c| c.to_string() == "all_util > 81.4"));
    let top_w: Vec<String> = top_attributions(&w, 5).into_iter().map(|r| r.feature).collect();
    assert_ne!(top, top_w);

    let same = s.what_if(&x_t, &Map::new(), None).unwrap();
    assert_eq!(same.leaf_changed, Some(false));
    assert_eq!(Explanation { leaf_changed: None, ..same }, e);

    let mut inside = Map::new();
    inside.insert("all_util".into(), json!(50.0));
    inside.insert("dti".into(), json!(30.0));
    let w = s.what_if(&x_t, &inside, None).unwrap();
    assert_eq!(w.leaf_changed, Some(false));
    assert_eq!(w.context, e.context);
    assert_ne!(w.attributions, e.attributions);

    let mut unknown = Map::new();
    unknown.insert("zodiac".into(), json!(1));
    assert!(s.what_if(&x_t, &unknown, None).is_err());
}

#[test]
fn categorical_override_must_be_known() {
    let schema = Schema::new(vec![Column::numerical("x"), Column::categorical("c", ["a", "b"])]).unwrap();
    let mut o = Map::new();
    o.insert("c".into(), json!("z"));
    assert!(matches!(apply_overrides(&schema, &[1.0, 0.0], &o), Err(crate::Error::UnknownCategory { .. })));
    o.insert("c".into(), json!("b"));
    assert_eq!(apply_overrides(&schema, &[1.0, 0.0], &o).unwrap(), vec![1.0, 1.0]);
}

fn explanation_with(attrs: Vec<Attribution>) -> Explanation {
    Explanation {
        task: Task::Regression,
        point: vec![],
        surrogate_prediction: 0.0,
        oracle: None,
        context: crate::lmt::RuleConjunction { conditions: vec![], leaf: 0 },
        leaf_id: 0,
        intercept: 0.0,
        attributions: attrs,
        fidelity: 0.0,
        leaf_changed: None,
    }
}

fn numeric_attr(name: &str, value: f64) -> Attribution {
    Attribution { feature: name.into(), column: name.into(), category: None, coefficient: value, encoded_value: 1.0, value }
}

#[test]
fn ranking_by_magnitude() {
    let e = explanation_with(vec![numeric_attr("a", 3.0), numeric_attr("b", -5.0), numeric_attr("c", 0.0)]);
    let order: Vec<String> = top_attributions(&e, 5).into_iter().map(|r| r.feature).collect();
    assert_eq!(order, vec!["b", "a", "c"]);
    assert_eq!(top_attributions(&e, 2).len(), 2);
}

#[test]
fn ties_keep_feature_order_and_one_hots_fold() {
    let cat = |cat: &str, enc: f64, w: f64| Attribution {
        feature: format!("c={cat}"),
        column: "c".into(),
        category: Some(cat.into()),
        coefficient: w,
        encoded_value: enc,
        value: w * enc,
    };
    let e = explanation_with(vec![numeric_attr("a", 2.0), cat("p", 0.0, 9.0), cat("q", 1.0, -2.0), numeric_attr("b", -2.0)]);
    let r = top_attributions(&e, 10);
    assert_eq!(r.len(), 3);
    assert_eq!((r[0].feature.as_str(), r[1].feature.as_str(), r[2].feature.as_str()), ("a", "c", "b"));
    assert_eq!(r[1].category.as_deref(), Some("q"));
    assert_eq!(r[1].value, -2.0);
}

#[test]
fn seventy_five_features_match_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let attrs: Vec<Attribution> = (0..75).map(|i| numeric_attr(&format!("f{i}"), rng.random_range(-10.0..10.0))).collect();
    let mut brute: Vec<(f64, usize)> = attrs.iter().enumerate().map(|(i, a)| (-a.value.abs(), i)).collect();
    brute.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let expected: Vec<String> = brute[..5].iter().map(|&(_, i)| format!("f{i}")).collect();
    let got: Vec<String> = top_attributions(&explanation_with(attrs), 5).into_iter().map(|r| r.feature).collect();
    assert_eq!(got, expected);
}

#[test]
fn explanation_json_round_trip() {
    let s = credit_surrogate();
    let e = s.explain(&[24.0, 78.0, 65000.0, 18.0, 12000.0, 13.5], None).unwrap();
    let text = serde_json::to_string(&e).unwrap();
    let back: Explanation = serde_json::from_str(&text).unwrap();
    assert_eq!(back, e);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["context"]["conditions"][1]["op"], "<=");
    let _ = array![0.0];
    let _: Arc<dyn Oracle> = Arc::new(linear_oracle());
}
