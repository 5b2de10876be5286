//! Encoded-row layout, row coding and conditional vectors.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gmm::{fit_mode_normalizer, ModeNormalizer};
use crate::error::{Error, Result};
use crate::tabular::{ColumnKind, Dataset, Schema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Segment {
    /// α slot at `offset`, followed by `normalizer.n_modes()` mode indicators.
    Numeric { column: usize, offset: usize, normalizer: ModeNormalizer },
    Categorical { column: usize, offset: usize, width: usize },
}

impl Segment {
    pub fn column(&self) -> usize {
        match self {
            Segment::Numeric { column, .. } | Segment::Categorical { column, .. } => *column,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Segment::Numeric { normalizer, .. } => 1 + normalizer.n_modes(),
            Segment::Categorical { width, .. } => *width,
        }
    }
}

/// Column-by-column layout of a generator output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedLayout {
    pub segments: Vec<Segment>,
    pub width: usize,
}

impl EncodedLayout {
    pub fn fit(data: &Dataset, k_modes: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("training rows"));
        }
        let mut segments = Vec::with_capacity(data.schema.len());
        let mut offset = 0;
        for (j, col) in data.schema.columns.iter().enumerate() {
            let seg = match col.kind {
                ColumnKind::Numerical => {
                    let values = data.cells.column(j).to_vec();
                    Segment::Numeric { column: j, offset, normalizer: fit_mode_normalizer(&values, k_modes)? }
                }
                ColumnKind::Categorical => Segment::Categorical { column: j, offset, width: col.categories.len() },
            };
            offset += seg.width();
            segments.push(seg);
        }
        Ok(EncodedLayout { segments, width: offset })
    }

    /// `(offset, width)` of every softmax-activated block: mode indicators and
    /// categorical one-hots.
    pub fn softmax_blocks(&self) -> Vec<(usize, usize)> {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Numeric { offset, normalizer, .. } => (offset + 1, normalizer.n_modes()),
                Segment::Categorical { offset, width, .. } => (*offset, *width),
            })
            .collect()
    }

    pub fn alpha_slots(&self) -> Vec<usize> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Numeric { offset, .. } => Some(*offset),
                Segment::Categorical { .. } => None,
            })
            .collect()
    }

    /// Encodes a row, drawing each numeric cell's mode from its posterior.
    pub fn encode_row<R: Rng + ?Sized>(&self, row: &[f64], rng: &mut R) -> Array1<f64> {
        self.encode_row_with(row, |norm, x| norm.sample_mode(x, rng))
    }

    /// Encodes a row with the mode of each numeric cell chosen by `pick`.
    pub fn encode_row_with(&self, row: &[f64], mut pick: impl FnMut(&ModeNormalizer, f64) -> usize) -> Array1<f64> {
        let mut out = Array1::zeros(self.width);
        for seg in &self.segments {
            match seg {
                Segment::Numeric { column, offset, normalizer } => {
                    let x = row[*column];
                    let m = pick(normalizer, x);
                    out[*offset] = normalizer.alpha(x, m);
                    out[offset + 1 + m] = 1.0;
                }
                Segment::Categorical { column, offset, .. } => out[offset + row[*column] as usize] = 1.0,
            }
        }
        out
    }

    pub fn encode<R: Rng + ?Sized>(&self, data: &Dataset, rng: &mut R) -> Array2<f64> {
        let mut out = Array2::zeros((data.n_rows(), self.width));
        for (i, row) in data.rows().enumerate() {
            out.row_mut(i).assign(&self.encode_row(row, rng));
        }
        out
    }

    /// Decodes with the argmax mode and argmax category.
    pub fn decode_row(&self, encoded: &[f64], n_columns: usize) -> Result<Vec<f64>> {
        if encoded.len() != self.width {
            return Err(Error::DimensionMismatch { expected: self.width, found: encoded.len() });
        }
        let mut row = vec![0.0; n_columns];
        for seg in &self.segments {
            match seg {
                Segment::Numeric { column, offset, normalizer } => {
                    let m = argmax(&encoded[offset + 1..offset + 1 + normalizer.n_modes()]);
                    row[*column] = normalizer.value(encoded[*offset].clamp(-1.0, 1.0), m);
                }
                Segment::Categorical { column, offset, width } => {
                    row[*column] = argmax(&encoded[*offset..offset + width]) as f64;
                }
            }
        }
        Ok(row)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Category counts of every categorical column, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub columns: Vec<CategoryCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub column: usize,
    /// Offset of this column's block inside the conditional vector.
    pub offset: usize,
    pub counts: Vec<f64>,
}

/// Chosen `(categorical column position, category)` behind a conditional vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CondChoice {
    pub table_index: usize,
    pub category: usize,
}

impl FrequencyTable {
    pub fn from_dataset(data: &Dataset) -> Self {
        Self::from_counts(&data.schema, |j, w| {
            let mut counts = vec![0.0; w];
            for &v in data.cells.column(j) {
                counts[v as usize] += 1.0;
            }
            counts
        })
    }

    pub fn from_counts(schema: &Schema, mut counts: impl FnMut(usize, usize) -> Vec<f64>) -> Self {
        let mut offset = 0;
        let mut columns = Vec::new();
        for j in schema.categorical_indices() {
            let w = schema.columns[j].categories.len();
            columns.push(CategoryCounts { column: j, offset, counts: counts(j, w) });
            offset += w;
        }
        FrequencyTable { columns }
    }

    /// Width of the conditional vector.
    pub fn width(&self) -> usize {
        self.columns.iter().map(|c| c.counts.len()).sum()
    }

    /// Uniform column, then category ∝ `log(1 + count)` (or ∝ `count` when
    /// `log_weighted` is false). `None` without categorical columns.
    pub fn sample<R: Rng + ?Sized>(&self, log_weighted: bool, rng: &mut R) -> Option<CondChoice> {
        let candidates: Vec<usize> =
            (0..self.columns.len()).filter(|&i| self.columns[i].counts.iter().any(|&c| c > 0.0)).collect();
        if candidates.is_empty() {
            return None;
        }
        let table_index = candidates[rng.random_range(0..candidates.len())];
        let weights: Vec<f64> = self.columns[table_index]
            .counts
            .iter()
            .map(|&c| if log_weighted { c.ln_1p() } else { c })
            .collect();
        let total: f64 = weights.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut category = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                category = k;
                break;
            }
        }
        while weights[category] == 0.0 {
            category -= 1;
        }
        Some(CondChoice { table_index, category })
    }

    pub fn vector(&self, choice: Option<CondChoice>) -> Array1<f64> {
        let mut v = Array1::zeros(self.width());
        if let Some(c) = choice {
            v[self.columns[c.table_index].offset + c.category] = 1.0;
        }
        v
    }
}

/// Conditional vector drawn by training-by-sampling.
pub fn sample_cond_vector<R: Rng + ?Sized>(table: &FrequencyTable, rng: &mut R) -> Array1<f64> {
    table.vector(table.sample(true, rng))
}
