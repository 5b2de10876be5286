//! Synthetic locality around a test point, labeled by the oracle.

use serde::{Deserialize, Serialize};

use super::oracle::Oracle;
use crate::ctgan::{train_ctgan, CtganConfig};
use crate::error::{Error, Result};
use crate::lmt::{LmtConfig, Task};
use crate::tabular::{fit_transforms, knn, Dataset, TransformOptions};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_N_SYNTHETIC: usize = 500;

/// What a classification surrogate is fitted on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Oracle class labels, logistic leaves.
    #[default]
    Hard,
    /// Oracle class-1 probabilities, ridge leaves.
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub k: usize,
    pub n_synthetic: usize,
    pub transforms: TransformOptions,
    pub gan: CtganConfig,
    /// Tree settings; `None` uses the defaults for the oracle's task.
    pub lmt: Option<LmtConfig>,
    pub label_mode: LabelMode,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            k: DEFAULT_K,
            n_synthetic: DEFAULT_N_SYNTHETIC,
            transforms: TransformOptions { skip_degenerate: true, ..TransformOptions::default() },
            gan: CtganConfig::default(),
            lmt: None,
            label_mode: LabelMode::Hard,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_synthetic == 0 {
            return Err(Error::Config("k and n_synthetic must be at least 1".into()));
        }
        Ok(())
    }

    /// Tree settings for the surrogate of an oracle with task `task`.
    pub fn lmt_for(&self, task: Task) -> LmtConfig {
        let surrogate_task = match (task, self.label_mode) {
            (Task::Classification, LabelMode::Probability) => Task::Regression,
            _ => task,
        };
        match &self.lmt {
            Some(c) => LmtConfig { task: surrogate_task, seed: self.seed, ..c.clone() },
            None => LmtConfig { seed: self.seed, ..LmtConfig::for_task(surrogate_task) },
        }
    }
}

/// Everything needed to regenerate a neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sampler: String,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub transforms: Option<TransformOptions>,
    pub epochs: Option<usize>,
    /// Synthetic cells clamped while inverting the transforms.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub rows: Dataset,
    pub task: Task,
    pub labels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl Neighborhood {
    /// Labels `rows` with one batched oracle call.
    pub fn label(rows: Dataset, oracle: &dyn Oracle, provenance: Provenance) -> Result<Self> {
        let p = oracle.predict(&rows)?;
        Ok(Neighborhood { rows, task: oracle.task(), labels: p.preds, probs: p.probs, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Seed for sampling from a GAN trained with `seed`.
pub(crate) fn sample_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// K nearest neighbours → reversible transforms → CTGAN → `n` samples →
/// inverse transforms → oracle labels.
pub fn generate_neighborhood(train: &Dataset, x_t: &[f64], oracle: &dyn Oracle, config: &SessionConfig) -> Result<Neighborhood> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training data"));
    }
    train.schema.check_row(x_t)?;
    if config.k > train.n_rows() {
        return Err(Error::Config(format!("k = {} exceeds the {} training rows", config.k, train.n_rows())));
    }
    let locality = knn(train, x_t, config.k)?;
    let transforms = fit_transforms(&locality, config.transforms)?;
    let model_space = transforms.transform_numeric(&locality)?;
    let gan = train_ctgan(&model_space, &CtganConfig { seed: config.seed, ..config.gan.clone() })?;
    let sampled = gan.sample(config.n_synthetic, sample_seed(config.seed))?;
    let (rows, report) = transforms.inverse_numeric(&sampled)?;
    let provenance = Provenance {
        sampler: "ctgan".into(),
        k: config.k,
        n: config.n_synthetic,
        seed: config.seed,
        transforms: Some(config.transforms),
        epochs: Some(config.gan.epochs),
        clamped: report.clamped,
    };
    Neighborhood::label(rows, oracle, provenance)
}
