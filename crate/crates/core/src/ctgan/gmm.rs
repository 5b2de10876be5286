//! One-dimensional Gaussian mixtures for mode-specific normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K_MODES: usize = 5;
/// Modes whose mixture weight falls below this are inactive.
pub const MODE_WEIGHT_FLOOR: f64 = 0.005;
pub const MIN_STDEV: f64 = 1e-6;

const EM_MAX_ITER: usize = 100;
const EM_TOL: f64 = 1e-8;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub weight: f64,
    pub mean: f64,
    pub stdev: f64,
}

impl Mode {
    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.stdev;
        -0.5 * z * z - self.stdev.ln() - LN_SQRT_2PI
    }
}

/// Mixture fitted to one numerical column. Only active modes are kept and
/// their weights sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeNormalizer {
    pub modes: Vec<Mode>,
}

/// Result of one EM run, with the mean log-likelihood after every iteration.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub modes: Vec<Mode>,
    pub log_likelihood: Vec<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn mean_log_likelihood(values: &[f64], modes: &[Mode]) -> f64 {
    let mut buf = vec![0.0; modes.len()];
    let total: f64 = values
        .iter()
        .map(|&x| {
            for (b, m) in buf.iter_mut().zip(modes) {
                *b = m.weight.ln() + m.log_density(x);
            }
            log_sum_exp(&buf)
        })
        .sum();
    total / values.len() as f64
}

/// EM for a `k`-component mixture, initialized at the `(i + ½)/k` sample
/// quantiles with the pooled standard deviation.
pub fn fit_em(values: &[f64], k: usize) -> Result<EmFit> {
    if values.is_empty() {
        return Err(Error::Empty("column values"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt().max(MIN_STDEV);
    let mut modes: Vec<Mode> = (0..k)
        .map(|i| {
            let q = ((i as f64 + 0.5) / k as f64 * n as f64) as usize;
            Mode { weight: 1.0 / k as f64, mean: sorted[q.min(n - 1)], stdev: sd / k as f64 }
        })
        .map(|m| Mode { stdev: m.stdev.max(MIN_STDEV), ..m })
        .collect();

    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITER {
        // E-step
        for (i, &x) in values.iter().enumerate() {
            let r = &mut resp[i * k..(i + 1) * k];
            for (rj, m) in r.iter_mut().zip(&modes) {
                *rj = m.weight.ln() + m.log_density(x);
            }
            let lse = log_sum_exp(r);
            r.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        // M-step
        for (j, m) in modes.iter_mut().enumerate() {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk <= f64::MIN_POSITIVE {
                m.weight = 0.0;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * k + j] * values[i]).sum::<f64>() / nk;
            let var = (0..n).map(|i| resp[i * k + j] * (values[i] - mu).powi(2)).sum::<f64>() / nk;
            *m = Mode { weight: nk / n as f64, mean: mu, stdev: var.sqrt().max(MIN_STDEV) };
        }
        let ll = mean_log_likelihood(values, &modes);
        trace.push(ll);
        if (ll - prev).abs() < EM_TOL {
            break;
        }
        prev = ll;
    }
    Ok(EmFit { modes, log_likelihood: trace })
}

/// Fits mixtures with 1..=`k_modes` components (capped at the number of
/// distinct values) and keeps the one with the lowest BIC.
pub fn fit_mode_normalizer(values: &[f64], k_modes: usize) -> Result<ModeNormalizer> {
    if values.is_empty() {
        return Err(Error::Empty("column values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("column contains non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() == 1 {
        return Ok(ModeNormalizer { modes: vec![Mode { weight: 1.0, mean: sorted[0], stdev: MIN_STDEV }] });
    }
    let k_max = k_modes.max(1).min(sorted.len());
    let n = values.len() as f64;
    let mut best: Option<(f64, Vec<Mode>)> = None;
    for k in 1..=k_max {
        let fit = fit_em(values, k)?;
        let ll = *fit.log_likelihood.last().unwrap_or(&f64::NEG_INFINITY) * n;
        let bic = -2.0 * ll + (3 * k - 1) as f64 * n.ln();
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, fit.modes));
        }
    }
    let mut modes: Vec<Mode> = best.expect("k_max ≥ 1").1.into_iter().filter(|m| m.weight >= MODE_WEIGHT_FLOOR).collect();
    let total: f64 = modes.iter().map(|m| m.weight).sum();
    modes.iter_mut().for_each(|m| m.weight /= total);
    Ok(ModeNormalizer { modes })
}

impl ModeNormalizer {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Posterior mode probabilities for `x`.
    pub fn posterior(&self, x: f64) -> Vec<f64> {
        let mut lp: Vec<f64> = self.modes.iter().map(|m| m.weight.ln() + m.log_density(x)).collect();
        let lse = log_sum_exp(&lp);
        if !lse.is_finite() {
            // far outside every mode: fall back to the nearest one
            let nearest = (0..self.modes.len())
                .min_by(|&a, &b| {
                    let da = ((x - self.modes[a].mean) / self.modes[a].stdev).abs();
                    let db = ((x - self.modes[b].mean) / self.modes[b].stdev).abs();
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            return (0..self.modes.len()).map(|i| f64::from(u8::from(i == nearest))).collect();
        }
        lp.iter_mut().for_each(|v| *v = (*v - lse).exp());
        lp
    }

    pub fn sample_mode<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> usize {
        let p = self.posterior(x);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }

    /// `α = clamp((x − μ)/(4σ), −1, 1)` for mode `m`.
    pub fn alpha(&self, x: f64, m: usize) -> f64 {
        let mode = &self.modes[m];
        ((x - mode.mean) / (4.0 * mode.stdev)).clamp(-1.0, 1.0)
    }

    pub fn value(&self, alpha: f64, m: usize) -> f64 {
        let mode = &self.modes[m];
        alpha * 4.0 * mode.stdev + mode.mean
    }
}
