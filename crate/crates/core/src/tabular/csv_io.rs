use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Column, ColumnKind, Dataset, Schema};
use crate::error::{Error, Result};

pub const DEFAULT_CATEGORICAL_THRESHOLD: usize = 10;

/// Where the column description comes from when loading a CSV.
#[derive(Debug, Clone)]
pub enum SchemaSource {
    Given(Schema),
    /// A column is categorical iff it has a non-numeric token or at most
    /// `threshold` distinct values.
    Infer { threshold: usize },
}

impl Default for SchemaSource {
    fn default() -> Self {
        SchemaSource::Infer { threshold: DEFAULT_CATEGORICAL_THRESHOLD }
    }
}

pub fn load_csv(path: &Path, source: SchemaSource) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_csv(std::fs::File::open(path)?, source)
}

pub fn read_csv<R: Read>(reader: R, source: SchemaSource) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut records: Vec<(usize, Vec<String>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(records.len() + 2);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::RaggedRow { line, expected: header.len(), found: rec.len() });
        }
        records.push((line, rec.iter().map(str::to_string).collect()));
    }

    let schema = match source {
        SchemaSource::Given(schema) => {
            let names: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
            if names != header.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::SchemaMismatch(format!("header {header:?} does not match schema columns {names:?}")));
            }
            schema
        }
        SchemaSource::Infer { threshold } => infer_schema(&header, &records, threshold)?,
    };

    let mut cells = Array2::zeros((records.len(), schema.len()));
    for (i, (line, rec)) in records.iter().enumerate() {
        for (j, (token, col)) in rec.iter().zip(&schema.columns).enumerate() {
            cells[[i, j]] = match col.kind {
                ColumnKind::Numerical => match token.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(Error::UnparseableNumber { line: *line, column: col.name.clone(), token: token.clone() })
                    }
                },
                ColumnKind::Categorical => col.category_index(token).ok_or_else(|| Error::UnknownCategory {
                    line: *line,
                    column: col.name.clone(),
                    token: token.clone(),
                })? as f64,
            };
        }
    }
    Dataset::new(schema, cells)
}

fn infer_schema(header: &[String], records: &[(usize, Vec<String>)], threshold: usize) -> Result<Schema> {
    let mut columns = Vec::with_capacity(header.len());
    for (j, name) in header.iter().enumerate() {
        let tokens: BTreeSet<&str> = records.iter().map(|(_, r)| r[j].as_str()).collect();
        let numeric: Option<Vec<(f64, &str)>> =
            tokens.iter().map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| (v, *t))).collect();
        let col = match numeric {
            Some(_) if tokens.len() > threshold => Column::numerical(name.clone()),
            Some(mut vals) => {
                vals.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
                Column::categorical(name.clone(), vals.into_iter().map(|(_, t)| t.to_string()))
            }
            None => Column::categorical(name.clone(), tokens.iter().map(|t| t.to_string())),
        };
        columns.push(col);
    }
    Schema::new(columns)
}

pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.schema.columns.iter().map(|c| c.name.as_str()))?;
    for row in data.rows() {
        let fields: Vec<String> = row
            .iter()
            .zip(&data.schema.columns)
            .map(|(&v, c)| match c.kind {
                ColumnKind::Numerical => format!("{v}"),
                ColumnKind::Categorical => c.categories[v as usize].clone(),
            })
            .collect();
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
