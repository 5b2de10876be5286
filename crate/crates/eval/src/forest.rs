//! Bagged CART ensemble used as the black-box target model.

use std::sync::Arc;

use lmte_core::explain::{Oracle, OracleRegistry, Predictions};
use lmte_core::lmt::Task;
use lmte_core::tabular::{Dataset, Schema};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cart::{fit_cart_on, CartConfig, DecisionTree, MaxFeatures};
use crate::datasets::{bundled, BundledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` uses `⌈√d⌉` for classification and `⌈d/3⌉` for regression.
    pub max_features: Option<MaxFeatures>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: None, min_samples_leaf: 1, max_features: None, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    /// A single unbagged tree searching every feature: plain CART.
    pub fn single_tree(max_depth: Option<usize>, seed: u64) -> Self {
        ForestConfig { n_trees: 1, max_depth, max_features: Some(MaxFeatures::All), bootstrap: false, seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceForest {
    pub task: Task,
    /// Feature columns the forest was trained on; categorical cells are used
    /// as their integer codes.
    pub schema: Schema,
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
}

pub fn fit_reference_forest(train: &Dataset, labels: &[f64], task: Task, config: &ForestConfig) -> Result<ReferenceForest> {
    if config.n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    if train.n_rows() != labels.len() {
        return Err(Error::LengthMismatch(train.n_rows(), labels.len()));
    }
    if train.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    match task {
        Task::Classification => {
            let ones = labels.iter().filter(|&&v| v == 1.0).count();
            if ones == 0 || ones == labels.len() {
                return Err(Error::DegenerateTarget("classification needs both classes".into()));
            }
        }
        Task::Regression => {
            if labels.iter().all(|&v| v == labels[0]) {
                return Err(Error::DegenerateTarget("regression target is constant".into()));
            }
        }
    }
    let cart = CartConfig {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        max_features: config.max_features.unwrap_or(MaxFeatures::for_task(task)),
        ..CartConfig::default()
    };
    let y = Array1::from(labels.to_vec());
    let n = train.n_rows();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if config.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            fit_cart_on(train.cells.view(), y.view(), rows, task, &cart, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceForest { task, schema: train.schema.clone(), config: config.clone(), trees })
}

impl ReferenceForest {
    /// Prediction and, for classification, the fraction of trees voting 1.
    /// A tied vote goes to the class with the larger mean leaf probability,
    /// then to class 0.
    pub fn predict_row(&self, row: &[f64]) -> (f64, Option<f64>) {
        let n = self.trees.len() as f64;
        match self.task {
            Task::Regression => (self.trees.iter().map(|t| t.leaf_value(row)).sum::<f64>() / n, None),
            Task::Classification => {
                let votes = self.trees.iter().map(|t| t.predict(row)).sum::<f64>();
                let share = votes / n;
                let label = if 2.0 * votes > n {
                    1.0
                } else if 2.0 * votes < n {
                    0.0
                } else {
                    let mean = self.trees.iter().map(|t| t.leaf_value(row)).sum::<f64>() / n;
                    f64::from(u8::from(mean > 0.5))
                };
                (label, Some(share))
            }
        }
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Predictions {
        let (preds, probs): (Vec<f64>, Vec<Option<f64>>) = data.rows().map(|r| self.predict_row(r)).unzip();
        let probs = match self.task {
            Task::Classification => Some(probs.into_iter().map(|p| p.unwrap_or(0.0)).collect()),
            Task::Regression => None,
        };
        Predictions { preds, probs }
    }
}

impl Oracle for ReferenceForest {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_raw(&self, data: &Dataset) -> lmte_core::Result<Predictions> {
        if data.schema.len() != self.schema.len() {
            return Err(lmte_core::Error::SchemaMismatch(format!(
                "forest expects {} columns, got {}",
                self.schema.len(),
                data.schema.len()
            )));
        }
        Ok(self.predict_dataset(data))
    }
}

/// Training data for an in-process model: a bundled dataset id, or a CSV
/// path with an optional schema sidecar, plus the target column name.
fn training_data(params: &Value) -> Result<(Dataset, Vec<f64>, Option<Task>)> {
    if let Some(id) = params.get("dataset").and_then(Value::as_str) {
        let BundledDataset { features, target, task, .. } = bundled(id)?;
        return Ok((features, target, Some(task)));
    }
    let path = params
        .get("train")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Config("model params need `dataset` or `train`".into()))?;
    let target = params
        .get("target")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Config("model params need `target` with `train`".into()))?;
    let source = match params.get("schema").and_then(Value::as_str) {
        Some(p) => lmte_core::tabular::SchemaSource::Given(Schema::load(std::path::Path::new(p))?),
        None => lmte_core::tabular::SchemaSource::default(),
    };
    let data = lmte_core::tabular::load_csv(std::path::Path::new(path), source)?;
    let (features, labels) = data.split_column(target)?;
    Ok((features, labels, None))
}

fn model_factory(task: Task, params: &Value, schema: &Schema, single: bool) -> Result<Arc<dyn Oracle>> {
    let (features, labels, bundled_task) = training_data(params)?;
    if bundled_task.is_some_and(|t| t != task) {
        return Err(Error::Config(format!("dataset task {bundled_task:?} does not match requested {task:?}")));
    }
    if &features.schema != schema {
        return Err(Error::Core(lmte_core::Error::SchemaMismatch("model training columns differ from the session schema".into())));
    }
    let mut config: ForestConfig = match params.get("forest") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => ForestConfig::default(),
    };
    if single {
        let depth = params.get("max_depth").and_then(Value::as_u64).map(|d| d as usize).or(Some(3));
        config = ForestConfig::single_tree(depth, config.seed);
    }
    Ok(Arc::new(fit_reference_forest(&features, &labels, task, &config)?))
}

/// Adds `reference-forest` and `decision-tree` (depth 3 unless
/// `params.max_depth` says otherwise) to `registry`.
pub fn register_models(registry: &mut OracleRegistry) {
    registry.register("reference-forest", |task, params, schema| Ok(model_factory(task, params, schema, false)?));
    registry.register("decision-tree", |task, params, schema| Ok(model_factory(task, params, schema, true)?));
}

/// The default registry plus the evaluation models.
pub fn registry() -> OracleRegistry {
    let mut r = OracleRegistry::default();
    register_models(&mut r);
    r
}
