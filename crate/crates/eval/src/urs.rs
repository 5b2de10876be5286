//! Independent per-feature perturbation around a point: the baseline
//! sampler the GAN neighborhood is compared against.

use lmte_core::explain::{Neighborhood, Oracle, Provenance};
use lmte_core::tabular::{Dataset, Schema};
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnStats {
    /// Mean and population standard deviation.
    Numeric { mean: f64, sd: f64 },
    /// Relative frequency of each category.
    Categorical { frequencies: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub schema: Schema,
    pub columns: Vec<ColumnStats>,
}

impl TrainStats {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training rows"));
        }
        let n = train.n_rows() as f64;
        let columns = train
            .schema
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let col = train.cells.column(j);
                if c.is_categorical() {
                    let mut counts = vec![0.0; c.categories.len()];
                    for &v in col {
                        counts[v as usize] += 1.0;
                    }
                    ColumnStats::Categorical { frequencies: counts.into_iter().map(|k| k / n).collect() }
                } else {
                    let mean = col.sum() / n;
                    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                    ColumnStats::Numeric { mean, sd }
                }
            })
            .collect();
        Ok(TrainStats { schema: train.schema.clone(), columns })
    }
}

/// `n` rows around `x_t`: numeric cells are `x_t + sd·N(0, 1)`, categorical
/// cells are drawn from the training frequencies, every cell independently.
pub fn urs_sample(stats: &TrainStats, x_t: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    stats.schema.check_row(x_t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pickers: Vec<Option<WeightedIndex<f64>>> = stats
        .columns
        .iter()
        .map(|c| match c {
            ColumnStats::Categorical { frequencies } => {
                WeightedIndex::new(frequencies).map(Some).map_err(|e| Error::Config(format!("category frequencies: {e}")))
            }
            ColumnStats::Numeric { .. } => Ok(None),
        })
        .collect::<Result<_>>()?;
    let mut cells = ndarray::Array2::zeros((n, x_t.len()));
    for mut row in cells.rows_mut() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = match (&stats.columns[j], &pickers[j]) {
                (_, Some(pick)) => pick.sample(&mut rng) as f64,
                (ColumnStats::Numeric { sd, .. }, None) => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x_t[j] + sd * z
                }
                (ColumnStats::Categorical { .. }, None) => unreachable!("categorical columns have a picker"),
            };
        }
    }
    Ok(Dataset::new(stats.schema.clone(), cells)?)
}

/// URS rows labeled by `oracle`.
pub fn urs_neighborhood(stats: &TrainStats, x_t: &[f64], oracle: &dyn Oracle, n: usize, seed: u64) -> Result<Neighborhood> {
    let rows = urs_sample(stats, x_t, n, seed)?;
    let provenance = Provenance { sampler: "urs".into(), k: 0, n, seed, transforms: None, epochs: None, clamped: 0 };
    Ok(Neighborhood::label(rows, oracle, provenance)?)
}
