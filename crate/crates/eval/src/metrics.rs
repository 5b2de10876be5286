//! Fidelity, rule quality and faithfulness metrics.

use std::collections::BTreeSet;

use lmte_core::explain::{Explanation, RankedAttribution, Surrogate};
use lmte_core::lmt::RuleConjunction;
use lmte_core::tabular::Dataset;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min {
        return Err(Error::Empty("predictions"));
    }
    Ok(())
}

/// Fraction of rows on which the surrogate label equals the oracle label.
pub fn fidelity_classification(surrogate: &[f64], oracle: &[f64]) -> Result<f64> {
    check_pair(surrogate, oracle, 1)?;
    Ok(surrogate.iter().zip(oracle).filter(|(a, b)| a == b).count() as f64 / oracle.len() as f64)
}

/// RMSE between surrogate and oracle divided by the population standard
/// deviation of the oracle predictions.
pub fn fidelity_regression(surrogate: &[f64], oracle: &[f64]) -> Result<f64> {
    check_pair(surrogate, oracle, 2)?;
    let n = oracle.len() as f64;
    let mean = oracle.iter().sum::<f64>() / n;
    let sd = (oracle.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateTarget("oracle predictions are constant".into()));
    }
    let rmse = (surrogate.iter().zip(oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
    Ok(rmse / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePrecision {
    pub coverage: f64,
    /// Absent when no row satisfies the rule.
    pub precision: Option<f64>,
    pub covered: usize,
}

/// Coverage of `context` over `rows`, and how often `local` agrees with the
/// oracle labels on the covered rows.
pub fn coverage_precision(
    context: &RuleConjunction,
    local: impl Fn(&[f64]) -> Result<f64>,
    oracle_labels: &[f64],
    rows: &Dataset,
) -> Result<CoveragePrecision> {
    if rows.n_rows() != oracle_labels.len() {
        return Err(Error::LengthMismatch(rows.n_rows(), oracle_labels.len()));
    }
    if rows.is_empty() {
        return Err(Error::Empty("evaluation rows"));
    }
    let mut covered = 0;
    let mut hits = 0;
    for (row, &label) in rows.rows().zip(oracle_labels) {
        if context.is_satisfied_by(&rows.schema, row) {
            covered += 1;
            if local(row)? == label {
                hits += 1;
            }
        }
    }
    Ok(CoveragePrecision {
        coverage: covered as f64 / rows.n_rows() as f64,
        precision: (covered > 0).then(|| hits as f64 / covered as f64),
        covered,
    })
}

/// [`coverage_precision`] of an explanation's context, with the leaf the
/// context leads to as the local classifier.
pub fn explanation_coverage_precision(
    surrogate: &Surrogate,
    explanation: &Explanation,
    oracle_labels: &[f64],
    rows: &Dataset,
) -> Result<CoveragePrecision> {
    let leaf = surrogate
        .tree
        .leaf(explanation.leaf_id)
        .ok_or_else(|| Error::Config(format!("node {} is not a leaf", explanation.leaf_id)))?;
    let local = |row: &[f64]| -> Result<f64> {
        let enc = Array1::from(surrogate.encoder.encode_row(row)?);
        Ok(f64::from(u8::from(leaf.predict(enc.view()) >= 0.5)))
    };
    coverage_precision(&explanation.context, local, oracle_labels, rows)
}

/// Share of `true_features` found among the top `⌈d/2⌉` of `ranked` by
/// absolute attribution.
///
/// When the cut falls inside a group of equal magnitudes, the group's slots
/// are shared: each tied feature counts with probability (free slots / group
/// size), the expected recall under random tie-breaking. Without this a
/// constant leaf (all attributions zero) would score by column order.
pub fn recall_faithfulness(ranked: &[RankedAttribution], true_features: &BTreeSet<String>) -> Result<f64> {
    if ranked.is_empty() {
        return Err(Error::Empty("attributions"));
    }
    if true_features.is_empty() {
        return Err(Error::Empty("true features"));
    }
    let k = ranked.len().div_ceil(2);
    let mut mags: Vec<f64> = ranked.iter().map(|r| r.value.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let cut = mags[k - 1];
    let above = mags.iter().filter(|&&m| m > cut).count();
    let tied = mags.iter().filter(|&&m| m == cut).count();
    let share = (k - above) as f64 / tied as f64;
    let found: f64 = ranked
        .iter()
        .filter(|r| true_features.contains(&r.feature))
        .map(|r| {
            let m = r.value.abs();
            if m > cut {
                1.0
            } else if m == cut {
                share
            } else {
                0.0
            }
        })
        .sum();
    Ok(found / true_features.len() as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Midpoint median.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}
