//! Tabular data: schema, dataset, CSV loading, reversible transforms and
//! neighbor selection.

mod csv_io;
mod knn;
mod transform;

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, read_csv, write_csv, SchemaSource, DEFAULT_CATEGORICAL_THRESHOLD};
pub use knn::{knn, knn_indices, mixed_distances};
pub use transform::{
    apply_transforms, boxcox, boxcox_inverse, boxcox_log_likelihood, fit_boxcox_lambda,
    fit_transforms, invert_transforms, BoxCoxParams, ColumnTransform, InversionReport, MinMax,
    TransformModel, TransformOptions, BOXCOX_EPSILON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl Column {
    pub fn numerical(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: ColumnKind::Numerical, categories: Vec::new() }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }

    pub fn category_index(&self, token: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == token)
    }
}

/// Ordered column descriptions shared by every row operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let s = Schema { columns };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if c.name.is_empty() {
                return Err(Error::InvalidSchema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate column `{}`", c.name)));
            }
            match c.kind {
                ColumnKind::Categorical => {
                    if c.categories.is_empty() {
                        return Err(Error::InvalidSchema(format!("categorical column `{}` has no categories", c.name)));
                    }
                    let mut cats = HashSet::new();
                    for cat in &c.categories {
                        if !cats.insert(cat.as_str()) {
                            return Err(Error::InvalidSchema(format!("column `{}` repeats category `{cat}`", c.name)));
                        }
                    }
                }
                ColumnKind::Numerical => {
                    if !c.categories.is_empty() {
                        return Err(Error::InvalidSchema(format!("numerical column `{}` lists categories", c.name)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Schema = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn numerical_indices(&self) -> Vec<usize> {
        self.columns.iter().enumerate().filter(|(_, c)| !c.is_categorical()).map(|(i, _)| i).collect()
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        self.columns.iter().enumerate().filter(|(_, c)| c.is_categorical()).map(|(i, _)| i).collect()
    }

    /// Width of the numeric + one-hot encoding.
    pub fn encoded_width(&self) -> usize {
        self.columns.iter().map(|c| if c.is_categorical() { c.categories.len() } else { 1 }).sum()
    }

    /// Short stable hash of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Parses one row given as a JSON array (categorical cells as strings,
    /// numeric cells as numbers) or as an object keyed by column name.
    pub fn row_from_json(&self, value: &serde_json::Value) -> Result<Vec<f64>> {
        let cells: Vec<&serde_json::Value> = match value {
            serde_json::Value::Array(a) => {
                if a.len() != self.len() {
                    return Err(Error::DimensionMismatch { expected: self.len(), found: a.len() });
                }
                a.iter().collect()
            }
            serde_json::Value::Object(m) => {
                let mut out = Vec::with_capacity(self.len());
                for c in &self.columns {
                    out.push(m.get(&c.name).ok_or_else(|| Error::invalid(format!("point is missing `{}`", c.name)))?);
                }
                out
            }
            _ => return Err(Error::invalid("point must be a JSON array or object")),
        };
        cells.into_iter().zip(&self.columns).map(|(v, c)| self.cell_from_json(c, v)).collect()
    }

    pub(crate) fn cell_from_json(&self, c: &Column, v: &serde_json::Value) -> Result<f64> {
        match c.kind {
            ColumnKind::Numerical => {
                let x = match v {
                    serde_json::Value::Number(n) => n.as_f64(),
                    serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
                    _ => None,
                };
                match x {
                    Some(x) if x.is_finite() => Ok(x),
                    _ => Err(Error::UnparseableNumber { line: 0, column: c.name.clone(), token: v.to_string() }),
                }
            }
            ColumnKind::Categorical => {
                let token = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                c.category_index(&token)
                    .map(|i| i as f64)
                    .ok_or(Error::UnknownCategory { line: 0, column: c.name.clone(), token })
            }
        }
    }

    pub fn row_to_json(&self, row: &[f64]) -> serde_json::Value {
        serde_json::Value::Array(
            row.iter()
                .zip(&self.columns)
                .map(|(&v, c)| match c.kind {
                    ColumnKind::Numerical => serde_json::json!(v),
                    ColumnKind::Categorical => serde_json::json!(c.categories[v as usize]),
                })
                .collect(),
        )
    }

    /// Returns `row` checked against this schema.
    pub fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: row.len() });
        }
        for (c, &v) in self.columns.iter().zip(row) {
            match c.kind {
                ColumnKind::Numerical if !v.is_finite() => {
                    return Err(Error::UnparseableNumber { line: 0, column: c.name.clone(), token: v.to_string() })
                }
                ColumnKind::Categorical if v < 0.0 || v.fract() != 0.0 || v as usize >= c.categories.len() => {
                    return Err(Error::CategoryOutOfRange {
                        column: c.name.clone(),
                        index: v.max(0.0) as usize,
                        width: c.categories.len(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Rows of cells under a schema. Categorical cells hold the category index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub cells: Array2<f64>,
}

impl Dataset {
    pub fn new(schema: Schema, cells: Array2<f64>) -> Result<Self> {
        if cells.ncols() != schema.len() {
            return Err(Error::DimensionMismatch { expected: schema.len(), found: cells.ncols() });
        }
        let cells = if cells.is_standard_layout() { cells } else { cells.as_standard_layout().into_owned() };
        let d = Dataset { schema, cells };
        for row in d.cells.rows() {
            d.schema.check_row(row.as_slice().expect("standard layout"))?;
        }
        Ok(d)
    }

    pub fn from_rows(schema: Schema, rows: &[Vec<f64>]) -> Result<Self> {
        let w = schema.len();
        let mut cells = Array2::zeros((rows.len(), w));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != w {
                return Err(Error::RaggedRow { line: i + 1, expected: w, found: r.len() });
            }
            cells.row_mut(i).assign(&ArrayView1::from(r.as_slice()));
        }
        Self::new(schema, cells)
    }

    pub fn n_rows(&self) -> usize {
        self.cells.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.nrows() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.cells.row(i).to_slice().expect("dataset cells are row-major")
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let cells = self.cells.select(Axis(0), indices).as_standard_layout().into_owned();
        Dataset { schema: self.schema.clone(), cells }
    }

    /// Drops one column, returning the remaining dataset and the dropped values.
    pub fn split_column(&self, name: &str) -> Result<(Dataset, Vec<f64>)> {
        let idx = self.schema.index_of(name).ok_or_else(|| Error::invalid(format!("no column `{name}`")))?;
        let keep: Vec<usize> = (0..self.schema.len()).filter(|&i| i != idx).collect();
        let schema = Schema { columns: keep.iter().map(|&i| self.schema.columns[i].clone()).collect() };
        let values = self.cells.column(idx).to_vec();
        let cells = self.cells.select(Axis(1), &keep).as_standard_layout().into_owned();
        Ok((Dataset { schema, cells }, values))
    }

    pub fn to_json_rows(&self) -> Vec<serde_json::Value> {
        self.rows().map(|r| self.schema.row_to_json(r)).collect()
    }

}
