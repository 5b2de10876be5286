//! Experiment designs: surrogate comparisons, cross-neighborhood
//! generalization, end-to-end fidelity, rule coverage/precision and recall
//! against a transparent target.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use lmte_core::ctgan::CtganConfig;
use lmte_core::explain::{
    generate_neighborhood, top_attributions, LabelMode, Neighborhood, Oracle, RankedAttribution, Session, SessionConfig, Surrogate,
    SurrogateEncoder,
};
use lmte_core::lmt::{EncodedFeature, LmtConfig, Task};
use lmte_core::tabular::Dataset;
use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{bundled, load_dataset, BundledDataset};
use crate::error::{Error, Result};
use crate::forest::{fit_reference_forest, ForestConfig, ReferenceForest};
use crate::linear::{Kernel, LinearSurrogate};
use crate::metrics::{explanation_coverage_precision, fidelity_classification, fidelity_regression, mean, median, recall_faithfulness};
use crate::urs::{urs_neighborhood, TrainStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// GAN-neighborhood tree vs URS-neighborhood linear model around the
    /// points nearest the target's decision boundary.
    Fig3,
    /// Tree vs linear surrogate, both fitted and scored on one URS
    /// neighborhood.
    Table2,
    /// Each surrogate fitted on its own neighborhood and scored on both.
    Table3,
    /// Whole pipeline fidelity against the URS + linear baseline.
    Table4,
    /// Coverage and precision of the context rules over the test split.
    Table5,
    /// Recall of the features on a transparent target tree's path.
    Table6,
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).map_err(|_| Error::UnknownDesign(s.to_string()))
    }
}

impl Design {
    pub fn default_points(self) -> usize {
        match self {
            Design::Fig3 => 1,
            Design::Table2 | Design::Table3 => 25,
            Design::Table4 => 50,
            Design::Table5 => 200,
            Design::Table6 => 20,
        }
    }

    pub fn default_target(self) -> TargetModel {
        match self {
            Design::Table5 => TargetModel::Forest(ForestConfig { n_trees: 20, ..ForestConfig::default() }),
            Design::Table6 => TargetModel::Tree { max_depth: 3 },
            _ => TargetModel::Forest(ForestConfig::default()),
        }
    }

    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            Design::Fig3 => &["lmt_ctgan", "linear_urs"],
            Design::Table2 => &["lmt", "linear"],
            Design::Table3 => &["lmt_ctgan_on_ctgan", "lmt_ctgan_on_urs", "linear_urs_on_urs", "linear_urs_on_ctgan"],
            Design::Table4 => &["lmte", "linear_urs"],
            Design::Table5 => &["coverage", "precision"],
            Design::Table6 => &["recall_lmte", "recall_linear_urs"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetModel {
    Forest(ForestConfig),
    /// One unbagged CART tree over all features.
    Tree { max_depth: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub id: String,
    pub design: String,
    /// Bundled dataset id, or a file stem under `data_dir`.
    pub dataset: String,
    pub data_dir: Option<PathBuf>,
    /// Required with `data_dir`.
    pub task: Option<Task>,
    /// Points explained; defaults depend on the design.
    pub n_points: Option<usize>,
    /// Held-out rows; defaults to `n_points` (25 for fig3, whose points are
    /// the held-out rows closest to the decision boundary).
    pub n_test: Option<usize>,
    /// Batch length for the batch-median aggregation of table5.
    pub batch_size: usize,
    pub n_synthetic: usize,
    pub k: usize,
    pub seed: u64,
    pub target: Option<TargetModel>,
    pub gan: CtganConfig,
    pub lmt: Option<LmtConfig>,
    pub kernel: Kernel,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            id: "experiment".into(),
            design: "table2".into(),
            dataset: "two_moons".into(),
            data_dir: None,
            task: None,
            n_points: None,
            n_test: None,
            batch_size: 100,
            n_synthetic: 500,
            k: 20,
            seed: 0,
            target: None,
            gan: CtganConfig::default(),
            lmt: None,
            kernel: Kernel::None,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Median,
    /// Median within consecutive batches, then the mean of the medians.
    MeanOfBatchMedians,
}

pub type Values = BTreeMap<String, Option<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    /// Position among the explained points.
    pub point: usize,
    /// Row of the dataset.
    pub row: usize,
    pub values: Values,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub start: usize,
    pub len: usize,
    pub medians: Values,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub experiment: String,
    pub design: Design,
    pub dataset: String,
    pub task: Task,
    pub aggregation: Aggregation,
    pub metrics: Vec<String>,
    pub records: Vec<PointRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<BatchSummary>,
    pub aggregates: Values,
}

fn column(records: &[PointRecord], metric: &str) -> Vec<f64> {
    records.iter().filter_map(|r| r.values.get(metric).copied().flatten()).collect()
}

/// Aggregates `records` under `aggregation`; absent values are skipped.
pub fn aggregate(metrics: &[String], records: &[PointRecord], aggregation: Aggregation, batch_size: usize) -> (Vec<BatchSummary>, Values) {
    match aggregation {
        Aggregation::Mean => (vec![], metrics.iter().map(|m| (m.clone(), mean(&column(records, m)))).collect()),
        Aggregation::Median => (vec![], metrics.iter().map(|m| (m.clone(), median(&column(records, m)))).collect()),
        Aggregation::MeanOfBatchMedians => {
            let batches: Vec<BatchSummary> = records
                .chunks(batch_size.max(1))
                .enumerate()
                .map(|(b, chunk)| BatchSummary {
                    start: b * batch_size.max(1),
                    len: chunk.len(),
                    medians: metrics.iter().map(|m| (m.clone(), median(&column(chunk, m)))).collect(),
                })
                .collect();
            let agg = metrics
                .iter()
                .map(|m| {
                    let meds: Vec<f64> = batches.iter().filter_map(|b| b.medians[m]).collect();
                    (m.clone(), mean(&meds))
                })
                .collect();
            (batches, agg)
        }
    }
}

impl MetricReport {
    /// Whether the stored aggregates follow from the records.
    pub fn aggregates_consistent(&self, batch_size: usize) -> bool {
        let (batches, agg) = aggregate(&self.metrics, &self.records, self.aggregation, batch_size);
        batches == self.batches && agg == self.aggregates
    }

    pub fn aggregate_of(&self, metric: &str) -> Option<f64> {
        self.aggregates.get(metric).copied().flatten()
    }

    /// Aligned plain-text table of the aggregates.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let how = match self.aggregation {
            Aggregation::Mean => "mean",
            Aggregation::Median => "median",
            Aggregation::MeanOfBatchMedians => "mean of batch medians",
        };
        let _ = writeln!(out, "{} ({:?} on {}, {:?}, {} points, {how})", self.experiment, self.design, self.dataset, self.task, self.records.len());
        let width = self.metrics.iter().map(String::len).max().unwrap_or(6).max(6);
        let _ = writeln!(out, "{:<width$}  {:>10}  {:>5}", "metric", "value", "n");
        for m in &self.metrics {
            let n = column(&self.records, m).len();
            let v = self.aggregate_of(m).map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(out, "{m:<width$}  {v:>10}  {n:>5}");
        }
        for b in &self.batches {
            let cells: Vec<String> = self
                .metrics
                .iter()
                .map(|m| format!("{m}={}", b.medians[m].map_or_else(|| "-".into(), |v| format!("{v:.4}"))))
                .collect();
            let _ = writeln!(out, "batch {}..{}: {}", b.start, b.start + b.len, cells.join(" "));
        }
        out
    }
}

/// Independent stream for test point `i`.
pub fn point_seed(master: u64, i: usize) -> u64 {
    let mut z = master ^ (i as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Everything a per-point run needs, fitted once per experiment.
struct Context<'a> {
    config: &'a ExperimentConfig,
    design: Design,
    task: Task,
    train: Dataset,
    test: Dataset,
    test_labels: Vec<f64>,
    target: ReferenceForest,
    stats: TrainStats,
    encoder: SurrogateEncoder,
}

fn load(config: &ExperimentConfig) -> Result<BundledDataset> {
    match &config.data_dir {
        None => bundled(&config.dataset),
        Some(dir) => {
            let task = config.task.ok_or_else(|| Error::Config("`task` is required with `data_dir`".into()))?;
            load_dataset(dir, &config.dataset, task)
        }
    }
}

fn lmt_config(config: &ExperimentConfig, task: Task) -> LmtConfig {
    config.lmt.clone().unwrap_or_else(|| LmtConfig::for_task(task))
}

impl Context<'_> {
    fn fidelity(&self, pred: &[f64], labels: &[f64]) -> Result<Option<f64>> {
        let r = match self.task {
            Task::Classification => fidelity_classification(pred, labels),
            Task::Regression => fidelity_regression(pred, labels),
        };
        match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::DegenerateTarget(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn session_config(&self, seed: u64) -> SessionConfig {
        SessionConfig {
            k: self.config.k,
            n_synthetic: self.config.n_synthetic,
            gan: self.config.gan.clone(),
            lmt: Some(lmt_config(self.config, self.task)),
            label_mode: LabelMode::Hard,
            seed,
            ..SessionConfig::default()
        }
    }

    fn ctgan(&self, x_t: &[f64], seed: u64) -> Result<Neighborhood> {
        Ok(generate_neighborhood(&self.train, x_t, &self.target, &self.session_config(seed))?)
    }

    fn urs(&self, x_t: &[f64], seed: u64) -> Result<Neighborhood> {
        urs_neighborhood(&self.stats, x_t, &self.target, self.config.n_synthetic, seed ^ 0x5bd1_e995)
    }

    fn tree(&self, n: &Neighborhood) -> Result<Surrogate> {
        Ok(Surrogate::fit(n, &self.encoder, &lmt_config(self.config, self.task), LabelMode::Hard)?)
    }

    fn tree_predict(&self, s: &Surrogate, rows: &Dataset) -> Result<Vec<f64>> {
        let x = self.encoder.encode(rows)?;
        let p = s.tree.predict_batch(x.view())?;
        Ok(match self.task {
            Task::Classification => p.iter().map(|&v| f64::from(u8::from(v >= 0.5))).collect(),
            Task::Regression => p.to_vec(),
        })
    }

    fn linear(&self, n: &Neighborhood, x_t: &[f64]) -> Result<LinearSurrogate> {
        let x = self.encoder.encode(&n.rows)?;
        let center = Array1::from(self.encoder.encode_row(x_t)?);
        let w = self.config.kernel.weights(x.view(), center.view());
        let y = Array1::from(n.labels.clone());
        LinearSurrogate::fit(x.view(), y.view(), self.task, w.as_ref().map(|w| w.view()))
    }

    fn linear_predict(&self, m: &LinearSurrogate, rows: &Dataset) -> Result<Vec<f64>> {
        Ok(m.predict(self.encoder.encode(rows)?.view()).to_vec())
    }

    /// Column-level attributions of a linear model at `x_t`, ranked.
    fn linear_ranked(&self, m: &LinearSurrogate, x_t: &[f64]) -> Result<Vec<RankedAttribution>> {
        let enc = self.encoder.encode_row(x_t)?;
        let map = self.encoder.feature_map();
        let schema = self.encoder.schema.clone();
        let mut out: Vec<RankedAttribution> = schema
            .columns
            .iter()
            .map(|c| RankedAttribution { feature: c.name.clone(), category: None, value: 0.0, coefficient: 0.0 })
            .collect();
        for (j, f) in map.features.iter().enumerate() {
            let col = schema.index_of(f.column()).expect("feature map follows the schema");
            let v = m.model.weights[j] * enc[j];
            out[col].value += v;
            match f {
                EncodedFeature::Numeric { .. } => out[col].coefficient = m.model.weights[j],
                EncodedFeature::Category { category, .. } => {
                    if enc[j] == 1.0 {
                        out[col].category = Some(category.clone());
                        out[col].coefficient = m.model.weights[j];
                    }
                }
            }
        }
        Ok(out)
    }

    fn true_features(&self, x_t: &[f64]) -> BTreeSet<String> {
        self.target.trees[0]
            .path_features(x_t)
            .into_iter()
            .map(|f| self.train.schema.columns[f].name.clone())
            .collect()
    }

    fn run_point(&self, x_t: &[f64], seed: u64) -> Result<Values> {
        let mut v = Values::new();
        let mut put = |k: &str, x: Option<f64>| {
            v.insert(k.to_string(), x);
        };
        match self.design {
            Design::Fig3 => {
                let nc = self.ctgan(x_t, seed)?;
                let tree = self.tree(&nc)?;
                put("lmt_ctgan", self.fidelity(&self.tree_predict(&tree, &nc.rows)?, &nc.labels)?);
                let nu = self.urs(x_t, seed)?;
                let lin = self.linear(&nu, x_t)?;
                put("linear_urs", self.fidelity(&self.linear_predict(&lin, &nu.rows)?, &nu.labels)?);
            }
            Design::Table2 => {
                let nu = self.urs(x_t, seed)?;
                let tree = self.tree(&nu)?;
                put("lmt", self.fidelity(&self.tree_predict(&tree, &nu.rows)?, &nu.labels)?);
                let lin = self.linear(&nu, x_t)?;
                put("linear", self.fidelity(&self.linear_predict(&lin, &nu.rows)?, &nu.labels)?);
            }
            Design::Table3 => {
                let nc = self.ctgan(x_t, seed)?;
                let nu = self.urs(x_t, seed)?;
                let tree = self.tree(&nc)?;
                let lin = self.linear(&nu, x_t)?;
                put("lmt_ctgan_on_ctgan", self.fidelity(&self.tree_predict(&tree, &nc.rows)?, &nc.labels)?);
                put("lmt_ctgan_on_urs", self.fidelity(&self.tree_predict(&tree, &nu.rows)?, &nu.labels)?);
                put("linear_urs_on_urs", self.fidelity(&self.linear_predict(&lin, &nu.rows)?, &nu.labels)?);
                put("linear_urs_on_ctgan", self.fidelity(&self.linear_predict(&lin, &nc.rows)?, &nc.labels)?);
            }
            Design::Table4 => {
                let nc = self.ctgan(x_t, seed)?;
                let s = Session::from_neighborhood(x_t, nc, &self.encoder, &self.target, &self.session_config(seed))?;
                put("lmte", self.fidelity(&self.tree_predict(&s.surrogate, &s.neighborhood.rows)?, &s.neighborhood.labels)?);
                let nu = self.urs(x_t, seed)?;
                let lin = self.linear(&nu, x_t)?;
                put("linear_urs", self.fidelity(&self.linear_predict(&lin, &nu.rows)?, &nu.labels)?);
            }
            Design::Table5 => {
                let nc = self.ctgan(x_t, seed)?;
                let s = Session::from_neighborhood(x_t, nc, &self.encoder, &self.target, &self.session_config(seed))?;
                let cp = explanation_coverage_precision(&s.surrogate, &s.explanation, &self.test_labels, &self.test)?;
                put("coverage", Some(cp.coverage));
                put("precision", cp.precision);
            }
            Design::Table6 => {
                let truth = self.true_features(x_t);
                if truth.is_empty() {
                    put("recall_lmte", None);
                    put("recall_linear_urs", None);
                } else {
                    let nc = self.ctgan(x_t, seed)?;
                    let s = Session::from_neighborhood(x_t, nc, &self.encoder, &self.target, &self.session_config(seed))?;
                    let ranked = top_attributions(&s.explanation, usize::MAX);
                    put("recall_lmte", Some(recall_faithfulness(&ranked, &truth)?));
                    let nu = self.urs(x_t, seed)?;
                    let lin = self.linear(&nu, x_t)?;
                    put("recall_linear_urs", Some(recall_faithfulness(&self.linear_ranked(&lin, x_t)?, &truth)?));
                }
            }
        }
        Ok(v)
    }
}

/// Runs one experiment. Rows are shuffled with `seed`; the first `n_test`
/// are held out, the target model is fitted on the rest, and each explained
/// point gets the stream `point_seed(seed, i)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricReport> {
    let design: Design = config.design.parse()?;
    let data = load(config)?;
    let task = data.task;
    if design == Design::Fig3 && task != Task::Classification {
        return Err(Error::Config("fig3 needs a classification dataset".into()));
    }
    if matches!(design, Design::Table5 | Design::Table6) && task != Task::Classification {
        return Err(Error::Config(format!("{design:?} needs a classification dataset")));
    }
    let n_points = config.n_points.unwrap_or(design.default_points());
    if n_points == 0 {
        return Err(Error::EmptyReport);
    }
    let n_test = config.n_test.unwrap_or(if design == Design::Fig3 { n_points.max(25) } else { n_points });
    if n_test < n_points {
        return Err(Error::Config(format!("n_test = {n_test} is smaller than n_points = {n_points}")));
    }
    let n = data.features.n_rows();
    if n_test + config.k > n {
        return Err(Error::Config(format!("{n_test} held-out rows leave fewer than k = {} training rows", config.k)));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    let train = data.features.select(train_idx);
    let train_y: Vec<f64> = train_idx.iter().map(|&i| data.target[i]).collect();
    let test = data.features.select(test_idx);

    let target = match config.target.clone().unwrap_or_else(|| design.default_target()) {
        TargetModel::Forest(f) => fit_reference_forest(&train, &train_y, task, &ForestConfig { seed: config.seed, ..f })?,
        TargetModel::Tree { max_depth } => fit_reference_forest(&train, &train_y, task, &ForestConfig::single_tree(Some(max_depth), config.seed))?,
    };
    let test_pred = target.predict(&test)?;

    let mut points: Vec<usize> = (0..n_test).collect();
    if design == Design::Fig3 {
        let probs = test_pred.probs.clone().unwrap_or_default();
        points.sort_by(|&a, &b| (probs[a] - 0.5).abs().total_cmp(&(probs[b] - 0.5).abs()).then(a.cmp(&b)));
    }
    points.truncate(n_points);

    let ctx = Context {
        config,
        design,
        task,
        stats: TrainStats::fit(&train)?,
        encoder: SurrogateEncoder::fit(&train)?,
        train,
        test_labels: test_pred.preds,
        test,
        target,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &p)| {
                let values = ctx.run_point(ctx.test.row(p), point_seed(config.seed, i))?;
                Ok(PointRecord { point: i, row: test_idx[p], values })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let aggregation = match (design, task) {
        (Design::Table5, _) => Aggregation::MeanOfBatchMedians,
        (_, Task::Classification) => Aggregation::Mean,
        (_, Task::Regression) => Aggregation::Median,
    };
    let metrics: Vec<String> = design.metrics().iter().map(|m| m.to_string()).collect();
    let (batches, aggregates) = aggregate(&metrics, &records, aggregation, config.batch_size);
    Ok(MetricReport {
        experiment: config.id.clone(),
        design,
        dataset: config.dataset.clone(),
        task,
        aggregation,
        metrics,
        records,
        batches,
        aggregates,
    })
}
