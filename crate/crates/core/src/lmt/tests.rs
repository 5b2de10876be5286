use super::*;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn xor_blobs(n_per: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let centers = [(2.0, 2.0, 1.0), (-2.0, -2.0, 1.0), (2.0, -2.0, 0.0), (-2.0, 2.0, 0.0)];
    let n = 4 * n_per;
    let mut x = Array2::zeros((n, 2));
    let mut y = Array1::zeros(n);
    for (k, &(cx, cy, label)) in centers.iter().enumerate() {
        for i in 0..n_per {
            let r = k * n_per + i;
            x[[r, 0]] = cx + noise.sample(&mut rng);
            x[[r, 1]] = cy + noise.sample(&mut rng);
            y[r] = label;
        }
    }
    (x, y)
}

fn accuracy(tree: &LinearModelTree<f64>, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let pred = tree.predict_labels(x.view()).unwrap();
    pred.iter().zip(y.iter()).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

#[test]
fn depth_zero_is_the_flat_leaf() {
    let (x, y) = xor_blobs(30, 1);
    let cfg = LmtConfig { max_depth: 0, ..LmtConfig::classification() };
    let tree = fit_lmt(x.view(), y.view(), &cfg).unwrap();
    assert_eq!(tree.nodes.len(), 1);
    let flat = fit_logistic(x.view(), y.view(), DEFAULT_LOGISTIC_REG).unwrap();
    for row in x.rows() {
        assert_eq!(tree.predict(row.as_slice().unwrap()).unwrap().to_bits(), flat.predict(row).to_bits());
    }
    let ycont = x.column(0).mapv(|v| v * v);
    let tree = fit_lmt(x.view(), ycont.view(), &LmtConfig { max_depth: 0, ..LmtConfig::regression() }).unwrap();
    let flat = fit_ridge(x.view(), ycont.view(), DEFAULT_RIDGE_REG).unwrap();
    for row in x.rows() {
        assert_eq!(tree.predict(row.as_slice().unwrap()).unwrap().to_bits(), flat.predict(row).to_bits());
    }
}

#[test]
fn xor_needs_depth() {
    let (x, y) = xor_blobs(50, 2);
    let flat = fit_lmt(x.view(), y.view(), &LmtConfig { max_depth: 0, ..LmtConfig::classification() }).unwrap();
    let flat_acc = accuracy(&flat, &x, &y);
    assert!(flat_acc < 0.7, "flat accuracy {flat_acc}");
    let tree = fit_lmt(x.view(), y.view(), &LmtConfig { max_depth: 2, ..LmtConfig::classification() }).unwrap();
    let acc = accuracy(&tree, &x, &y);
    assert!(acc >= 0.95, "tree accuracy {acc}");
    assert!(tree.depth() <= 2);
}

#[test]
fn depth_one_recovers_two_slopes() {
    let n = 200;
    let x = Array2::from_shape_fn((n, 1), |(i, _)| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
    let y = x.column(0).mapv(|v| if v < 0.0 { v } else { 2.0 * v });
    let tree = fit_lmt(x.view(), y.view(), &LmtConfig { max_depth: 1, ..LmtConfig::regression() }).unwrap();
    let Node::Split { threshold, left, right, .. } = tree.nodes[0] else { panic!("expected a split") };
    assert!(threshold.abs() <= 0.1);
    assert!((tree.leaf(left).unwrap().weights[0] - 1.0).abs() < 0.05);
    assert!((tree.leaf(right).unwrap().weights[0] - 2.0).abs() < 0.05);
}

#[test]
fn threshold_point_goes_left() {
    let leaf = |b: f64| Node::Leaf {
        model: LeafModel { kind: LeafKind::Ridge, weights: Array1::zeros(1), intercept: b, loss: 0.0, n_rows: 1 },
    };
    let tree = LinearModelTree::from_nodes(
        vec![Node::Split { feature: 0, threshold: 1.5, left: 1, right: 2 }, leaf(-1.0), leaf(1.0)],
        1,
        LmtConfig::regression(),
    )
    .unwrap();
    assert_eq!(tree.predict(&[1.5]).unwrap(), -1.0);
    assert_eq!(tree.predict(&[1.5000001]).unwrap(), 1.0);
    assert!(tree.predict(&[1.0, 2.0]).is_err());
}

fn route_oracle(tree: &LinearModelTree<f64>, id: usize, p: &[f64]) -> f64 {
    match &tree.nodes[id] {
        Node::Leaf { model } => {
            let z: f64 = model.weights.iter().zip(p).map(|(w, v)| w * v).sum::<f64>() + model.intercept;
            match model.kind {
                LeafKind::Ridge => z,
                LeafKind::Logistic => 1.0 / (1.0 + (-z).exp()),
            }
        }
        Node::Split { feature, threshold, left, right } => {
            route_oracle(tree, if p[*feature] <= *threshold { *left } else { *right }, p)
        }
    }
}

#[test]
fn predictions_match_manual_routing() {
    let (x, y) = xor_blobs(40, 3);
    let tree = fit_lmt(x.view(), y.view(), &LmtConfig::classification()).unwrap();
    assert!(tree.nodes.len() > 1);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let p = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let got = tree.predict(&p).unwrap();
        assert!((got - route_oracle(&tree, 0, &p)).abs() < 1e-12);
    }
}

#[test]
fn structural_invariants() {
    let (x, y) = xor_blobs(60, 4);
    let cfg = LmtConfig { min_leaf: Some(25), ..LmtConfig::classification() };
    let tree = fit_lmt(x.view(), y.view(), &cfg).unwrap();
    assert!(tree.depth() <= cfg.max_depth);
    assert!(tree.leaves().all(|(_, m)| m.n_rows >= 25));
    assert_eq!(tree.leaves().map(|(_, m)| m.n_rows).sum::<usize>(), x.nrows());
}

#[test]
fn too_few_rows_is_a_config_error() {
    let (x, y) = xor_blobs(2, 5);
    let err = fit_lmt(x.view(), y.view(), &LmtConfig::classification()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let empty = Array2::<f64>::zeros((0, 2));
    assert!(matches!(fit_lmt(empty.view(), Array1::zeros(0).view(), &LmtConfig::regression()), Err(Error::Empty(_))));
}

#[test]
fn fitting_is_deterministic() {
    let (x, y) = xor_blobs(40, 6);
    let a = fit_lmt(x.view(), y.view(), &LmtConfig::classification()).unwrap().to_json().unwrap();
    let b = fit_lmt(x.view(), y.view(), &LmtConfig::classification()).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    let back = LinearModelTree::<f64>::from_json(&a).unwrap();
    assert_eq!(back.to_json().unwrap(), a);
}

#[test]
fn single_precision_tree() {
    let n = 120;
    let x = Array2::from_shape_fn((n, 1), |(i, _)| -1.0f32 + 2.0 * i as f32 / (n - 1) as f32);
    let y = x.column(0).mapv(|v| if v < 0.0 { -v } else { 3.0 * v });
    let tree = fit_lmt(x.view(), y.view(), &LmtConfig { max_depth: 1, ..LmtConfig::regression() }).unwrap();
    assert_eq!(tree.depth(), 1);
}

fn regression_data() -> impl Strategy<Value = (Array2<f64>, Array1<f64>)> {
    (40usize..90, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-2.0..2.0));
        let y = Array1::from_shape_fn(n, |i| {
            let (a, b) = (x[[i, 0]], x[[i, 1]]);
            (if a > 0.3 { 2.0 * b } else { -b + a * a }) + rng.random_range(-0.1..0.1)
        });
        (x, y)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leaf_loss_never_grows_with_depth((x, y) in regression_data()) {
        let mut prev = f64::INFINITY;
        for depth in 0..4 {
            let cfg = LmtConfig { max_depth: depth, min_leaf: Some(8), ..LmtConfig::regression() };
            let total = fit_lmt(x.view(), y.view(), &cfg).unwrap().total_leaf_loss();
            prop_assert!(total <= prev * (1.0 + 1e-9) + 1e-12, "depth {}: {} > {}", depth, total, prev);
            prev = total;
        }
    }

    #[test]
    fn greedy_never_loses_to_adaptive((x, y) in regression_data(), n_candidates in 2usize..12) {
        let greedy = LmtConfig { min_leaf: Some(8), search: SplitSearch::Greedy, ..LmtConfig::regression() };
        let adaptive = LmtConfig { search: SplitSearch::Adaptive, n_candidates, ..greedy.clone() };
        let parent = fit_ridge(x.view(), y.view(), DEFAULT_RIDGE_REG).unwrap();
        let g = best_split(x.view(), y.view(), &LmtConfig { rel_tol: -1e300, ..greedy }, &parent).unwrap();
        let a = best_split(x.view(), y.view(), &LmtConfig { rel_tol: -1e300, ..adaptive }, &parent).unwrap();
        if let (Some(g), Some(a)) = (g, a) {
            prop_assert!(g.total_loss <= a.total_loss);
        }
    }

    #[test]
    fn every_point_satisfies_its_context((x, y) in regression_data()) {
        let schema = crate::tabular::Schema::new(vec![
            crate::tabular::Column::numerical("a"),
            crate::tabular::Column::numerical("b"),
            crate::tabular::Column::numerical("c"),
        ]).unwrap();
        let cfg = LmtConfig { max_depth: 3, min_leaf: Some(6), ..LmtConfig::regression() };
        let tree = fit_lmt(x.view(), y.view(), &cfg).unwrap();
        let map = FeatureMap::identity(&schema);
        for row in x.rows() {
            let p = row.as_slice().unwrap();
            let rule = decision_path(&tree, p, &map).unwrap();
            prop_assert!(rule.is_satisfied_by(&schema, p));
            prop_assert_eq!(rule.leaf, tree.leaf_index(p).unwrap());
        }
    }
}
