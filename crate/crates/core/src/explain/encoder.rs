//! Encoding of raw rows for the surrogate tree.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmt::{EncodedFeature, FeatureMap};
use crate::tabular::{ColumnKind, Dataset, Schema};

/// Numeric columns standardized with reference statistics, categorical
/// columns one-hot, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEncoder {
    pub schema: Schema,
    /// Per schema column; `(mean, scale)` for numeric columns.
    pub stats: Vec<Option<(f64, f64)>>,
    pub width: usize,
}

impl SurrogateEncoder {
    /// Statistics from `reference` (normally the training data). Constant
    /// columns get unit scale.
    pub fn fit(reference: &Dataset) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Empty("reference data"));
        }
        let n = reference.n_rows() as f64;
        let stats = reference
            .schema
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| match c.kind {
                ColumnKind::Numerical => {
                    let col = reference.cells.column(j);
                    let mean = col.sum() / n;
                    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                    Some((mean, if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 }))
                }
                ColumnKind::Categorical => None,
            })
            .collect();
        Ok(SurrogateEncoder { schema: reference.schema.clone(), stats, width: reference.schema.encoded_width() })
    }

    pub fn feature_map(&self) -> FeatureMap {
        let mut features = Vec::with_capacity(self.width);
        for (c, s) in self.schema.columns.iter().zip(&self.stats) {
            match (c.kind, s) {
                (ColumnKind::Numerical, Some((mean, scale))) => {
                    features.push(EncodedFeature::Numeric { column: c.name.clone(), scale: *scale, offset: *mean })
                }
                _ => features.extend(
                    c.categories.iter().map(|k| EncodedFeature::Category { column: c.name.clone(), category: k.clone() }),
                ),
            }
        }
        FeatureMap { features }
    }

    pub fn encode_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.schema.check_row(row)?;
        let mut out = Vec::with_capacity(self.width);
        for ((c, s), &v) in self.schema.columns.iter().zip(&self.stats).zip(row) {
            match s {
                Some((mean, scale)) => out.push((v - mean) / scale),
                None => out.extend((0..c.categories.len()).map(|k| f64::from(u8::from(k == v as usize)))),
            }
        }
        Ok(out)
    }

    pub fn encode(&self, data: &Dataset) -> Result<Array2<f64>> {
        if data.schema != self.schema {
            return Err(Error::SchemaMismatch("rows do not match the encoder schema".into()));
        }
        let mut out = Array2::zeros((data.n_rows(), self.width));
        for (i, row) in data.rows().enumerate() {
            for (k, v) in self.encode_row(row)?.into_iter().enumerate() {
                out[[i, k]] = v;
            }
        }
        Ok(out)
    }
}
