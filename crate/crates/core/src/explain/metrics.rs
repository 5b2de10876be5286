//! Agreement between a surrogate and the target model.

use ndarray::ArrayView1;

use crate::error::{Error, Result};

fn check(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: b, found: a });
    }
    if a == 0 {
        return Err(Error::Empty("predictions"));
    }
    Ok(())
}

/// Fraction of rows where the surrogate label equals the target label.
pub fn classification_fidelity(surrogate: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> Result<f64> {
    check(surrogate.len(), target.len())?;
    let hits = surrogate.iter().zip(target).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / target.len() as f64)
}

/// RMSE between surrogate and target divided by the population standard
/// deviation of the target. Zero target spread gives 0 for an exact match
/// and infinity otherwise.
pub fn regression_fidelity(surrogate: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> Result<f64> {
    check(surrogate.len(), target.len())?;
    let n = target.len() as f64;
    let rmse = (surrogate.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
    let mean = target.sum() / n;
    let sd = (target.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(if sd > 0.0 {
        rmse / sd
    } else if rmse == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}
