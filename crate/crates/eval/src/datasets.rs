//! Small generated datasets bundled with the harness.
//!
//! Every dataset is a pure function of its id, so the CSV copies under
//! `data/` can be regenerated and checked byte for byte.

use std::f64::consts::PI;
use std::path::Path;

use lmte_core::lmt::Task;
use lmte_core::tabular::{load_csv, write_csv, Column, Dataset, Schema, SchemaSource};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Name of the label column in the CSV copies.
pub const TARGET: &str = "target";
pub const BUNDLED_IDS: [&str; 4] = ["two_moons", "blobs", "credit", "friedman"];
const ROWS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct BundledDataset {
    pub id: String,
    pub task: Task,
    pub features: Dataset,
    pub target: Vec<f64>,
}

impl BundledDataset {
    /// Features plus the label as a trailing numerical `target` column.
    pub fn with_target(&self) -> Dataset {
        let mut columns = self.features.schema.columns.clone();
        columns.push(Column::numerical(TARGET));
        let n = self.features.n_rows();
        let y = Array2::from_shape_vec((n, 1), self.target.clone()).expect("one label per row");
        let cells = ndarray::concatenate(Axis(1), &[self.features.cells.view(), y.view()]).expect("matching rows");
        Dataset::new(Schema { columns }, cells).expect("labels are finite")
    }

    pub fn from_full(id: &str, task: Task, data: &Dataset) -> Result<Self> {
        let (features, target) = data.split_column(TARGET)?;
        Ok(BundledDataset { id: id.to_string(), task, features, target })
    }
}

pub fn bundled(id: &str) -> Result<BundledDataset> {
    match id {
        "two_moons" => Ok(two_moons(ROWS, 0.15, 11)),
        "blobs" => Ok(blobs(ROWS, 12)),
        "credit" => Ok(credit(ROWS, 13)),
        "friedman" => Ok(friedman(ROWS, 14)),
        _ => Err(Error::UnknownDataset(id.to_string(), BUNDLED_IDS.join(", "))),
    }
}

fn shuffled(schema: Schema, mut rows: Vec<(Vec<f64>, f64)>, rng: &mut ChaCha8Rng) -> (Dataset, Vec<f64>) {
    rows.shuffle(rng);
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = rows.into_iter().unzip();
    (Dataset::from_rows(schema, &x).expect("generated rows match the schema"), y)
}

/// Two interleaved half circles with Gaussian noise; the lower moon is class 1.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> BundledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let noise = Normal::new(0.0, noise).expect("finite noise");
    let linspace = |k: usize, i: usize| if k > 1 { PI * i as f64 / (k - 1) as f64 } else { 0.0 };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n_outer {
        let t = linspace(n_outer, i);
        rows.push((vec![t.cos() + noise.sample(&mut rng), t.sin() + noise.sample(&mut rng)], 0.0));
    }
    for i in 0..n_inner {
        let t = linspace(n_inner, i);
        rows.push((vec![1.0 - t.cos() + noise.sample(&mut rng), 0.5 - t.sin() + noise.sample(&mut rng)], 1.0));
    }
    let schema = Schema::new(vec![Column::numerical("x1"), Column::numerical("x2")]).expect("valid");
    let (features, target) = shuffled(schema, rows, &mut rng);
    BundledDataset { id: "two_moons".into(), task: Task::Classification, features, target }
}

/// Four Gaussian blobs in the first two of four dimensions with XOR labels;
/// `x3` and `x4` are pure noise.
pub fn blobs(n: usize, seed: u64) -> BundledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [([2.0, 2.0], 1.0), ([-2.0, -2.0], 1.0), ([2.0, -2.0], 0.0), ([-2.0, 2.0], 0.0)];
    let rows = (0..n)
        .map(|i| {
            let (c, label) = centers[i % 4];
            let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
            (vec![c[0] + 1.1 * z(), c[1] + 1.1 * z(), z(), z()], label)
        })
        .collect();
    let schema = Schema::new((1..=4).map(|i| Column::numerical(format!("x{i}"))).collect()).expect("valid");
    let (features, target) = shuffled(schema, rows, &mut rng);
    BundledDataset { id: "blobs".into(), task: Task::Classification, features, target }
}

/// Loan-default style table: counts, a utilization ratio, skewed income,
/// debt-to-income and two categoricals, with an interaction-heavy label.
pub fn credit(n: usize, seed: u64) -> BundledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accounts = Poisson::new(4.0).expect("positive rate");
    let income = LogNormal::<f64>::new(11.0, 0.45).expect("valid");
    let grade_effect = [-1.2, -0.2, 0.7, 1.6];
    let rows = (0..n)
        .map(|_| {
            let acc: f64 = accounts.sample(&mut rng);
            let util = 100.0 * rng.random::<f64>().powf(0.8);
            let inc: f64 = income.sample(&mut rng);
            let inc = inc.round();
            let dti = (rng.random::<f64>() * 35.0 + 0.5 * acc).min(45.0);
            let grade = rng.random_range(0..4usize);
            let home = rng.random_range(0..3usize);
            let logit = -1.9 + 0.3 * acc + if util > 80.0 { 1.8 } else { 0.0 } + 0.05 * dti
                - 1.2 * (inc / 60000.0).ln()
                + grade_effect[grade]
                + if home == 0 { 0.5 } else { 0.0 }
                + if acc > 6.0 && util > 60.0 { 1.0 } else { 0.0 };
            let u: f64 = rng.random_range(1e-12..1.0);
            let noise = 0.6 * (u / (1.0 - u)).ln();
            let label = f64::from(u8::from(logit + noise > 0.0));
            (vec![acc, (util * 10.0).round() / 10.0, inc, (dti * 100.0).round() / 100.0, grade as f64, home as f64], label)
        })
        .collect();
    let schema = Schema::new(vec![
        Column::numerical("open_accounts"),
        Column::numerical("utilization"),
        Column::numerical("income"),
        Column::numerical("dti"),
        Column::categorical("grade", ["A", "B", "C", "D"]),
        Column::categorical("home", ["rent", "own", "mortgage"]),
    ])
    .expect("valid");
    let (features, target) = shuffled(schema, rows, &mut rng);
    BundledDataset { id: "credit".into(), task: Task::Classification, features, target }
}

/// Friedman's first regression benchmark on five uniform inputs.
pub fn friedman(n: usize, seed: u64) -> BundledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let e: f64 = StandardNormal.sample(&mut rng);
            let y = 10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4] + e;
            (x, y)
        })
        .collect();
    let schema = Schema::new((1..=5).map(|i| Column::numerical(format!("x{i}"))).collect()).expect("valid");
    let (features, target) = shuffled(schema, rows, &mut rng);
    BundledDataset { id: "friedman".into(), task: Task::Regression, features, target }
}

pub fn task_of(id: &str) -> Result<Task> {
    Ok(bundled(id)?.task)
}

/// Writes `<id>.csv` and `<id>.schema.json` for every bundled dataset.
pub fn write_bundled(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for id in BUNDLED_IDS {
        let full = bundled(id)?.with_target();
        write_csv(&full, std::fs::File::create(dir.join(format!("{id}.csv")))?)?;
        let schema = serde_json::to_string_pretty(&full.schema)? + "\n";
        std::fs::write(dir.join(format!("{id}.schema.json")), schema)?;
    }
    Ok(())
}

/// Reads a dataset written by [`write_bundled`] (or laid out the same way).
pub fn load_dataset(dir: &Path, id: &str, task: Task) -> Result<BundledDataset> {
    let schema = Schema::load(&dir.join(format!("{id}.schema.json")))?;
    let data = load_csv(&dir.join(format!("{id}.csv")), SchemaSource::Given(schema))?;
    BundledDataset::from_full(id, task, &data)
}
