use super::{ColumnKind, Dataset};
use crate::error::{Error, Result};

/// Mixed-type distance from `point` to every row: Euclidean over z-scored
/// numerical columns plus a 0/1 mismatch per categorical column.
pub fn mixed_distances(data: &Dataset, point: &[f64]) -> Result<Vec<f64>> {
    data.schema.check_row(point)?;
    let n = data.n_rows();
    let mut scales = Vec::with_capacity(data.schema.len());
    for (j, col) in data.schema.columns.iter().enumerate() {
        if col.kind == ColumnKind::Numerical {
            let c = data.cells.column(j);
            let mean = c.sum() / n as f64;
            let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            scales.push(if sd > 0.0 { sd } else { 1.0 });
        } else {
            scales.push(0.0);
        }
    }
    Ok(data
        .rows()
        .map(|row| {
            let mut sq = 0.0;
            let mut mismatches = 0.0;
            for (j, col) in data.schema.columns.iter().enumerate() {
                match col.kind {
                    ColumnKind::Numerical => sq += ((row[j] - point[j]) / scales[j]).powi(2),
                    ColumnKind::Categorical => {
                        if row[j] != point[j] {
                            mismatches += 1.0;
                        }
                    }
                }
            }
            sq.sqrt() + mismatches
        })
        .collect())
}

/// Indices of the `k` nearest rows, nearest first; ties go to the lower row index.
pub fn knn_indices(data: &Dataset, point: &[f64], k: usize) -> Result<Vec<usize>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if k == 0 || k > data.n_rows() {
        return Err(Error::invalid(format!("k = {k} must be in 1..={}", data.n_rows())));
    }
    let d = mixed_distances(data, point)?;
    let mut idx: Vec<usize> = (0..data.n_rows()).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

pub fn knn(data: &Dataset, point: &[f64], k: usize) -> Result<Dataset> {
    Ok(data.select(&knn_indices(data, point, k)?))
}
