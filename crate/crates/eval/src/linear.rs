//! Single linear or logistic surrogate, optionally kernel-weighted around
//! the explained point.

use lmte_core::linalg::solve_spd;
use lmte_core::lmt::{fit_logistic, fit_ridge, LeafKind, LeafModel, LmtConfig, Task};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample weighting for the linear surrogate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    None,
    /// `exp(−d²/σ²)` of the Euclidean distance in encoded space; σ defaults
    /// to `0.75·√width`.
    Exponential { width: Option<f64> },
}

impl Kernel {
    pub fn weights(&self, x: ArrayView2<'_, f64>, center: ArrayView1<'_, f64>) -> Option<Array1<f64>> {
        match *self {
            Kernel::None => None,
            Kernel::Exponential { width } => {
                let sigma = width.unwrap_or(0.75 * (x.ncols() as f64).sqrt());
                Some(
                    x.rows()
                        .into_iter()
                        .map(|r| {
                            let d2: f64 = r.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                            (-d2 / (sigma * sigma)).exp()
                        })
                        .collect(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSurrogate {
    pub task: Task,
    pub model: LeafModel<f64>,
}

impl LinearSurrogate {
    /// Fits with the leaf regularization a tree surrogate for `task` would
    /// use; unweighted fits are exactly a depth-0 tree.
    pub fn fit(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, task: Task, weights: Option<ArrayView1<'_, f64>>) -> Result<Self> {
        let reg = LmtConfig::for_task(task).resolved_regularization();
        let model = match (task, weights) {
            (Task::Regression, None) => fit_ridge(x, y, reg)?,
            (Task::Classification, None) => fit_logistic(x, y, reg)?,
            (Task::Regression, Some(w)) => weighted_ridge(x, y, w, reg)?,
            (Task::Classification, Some(w)) => weighted_logistic(x, y, w, reg)?,
        };
        Ok(LinearSurrogate { task, model })
    }

    /// Class labels (probability ≥ 0.5) or values.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|r| {
                let v = self.model.predict(r);
                match self.task {
                    Task::Classification => f64::from(u8::from(v >= 0.5)),
                    Task::Regression => v,
                }
            })
            .collect()
    }
}

fn check(x: &ArrayView2<'_, f64>, y: &ArrayView1<'_, f64>, w: &ArrayView1<'_, f64>) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Empty("surrogate rows"));
    }
    if x.nrows() != y.len() || w.len() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len().min(w.len())));
    }
    if w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Config("sample weights must be finite and non-negative".into()));
    }
    let total = w.sum();
    if total <= 0.0 {
        return Err(Error::Config("sample weights sum to zero".into()));
    }
    Ok(total)
}

fn solve_with_bump(mut a: Array2<f64>, b: ArrayView1<'_, f64>, penalized: usize) -> Result<Array1<f64>> {
    let mut bump = 1e-8;
    for _ in 0..8 {
        if let Some(sol) = solve_spd(a.view(), b) {
            if sol.iter().all(|v| v.is_finite()) {
                return Ok(sol);
            }
        }
        for i in 0..penalized {
            a[[i, i]] += bump;
        }
        bump *= 100.0;
    }
    Err(Error::Config("weighted system is singular".into()))
}

/// Ridge on weighted-centered data: `(XcᵀWXc + reg·I) w = XcᵀW yc`.
pub fn weighted_ridge(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, w: ArrayView1<'_, f64>, reg: f64) -> Result<LeafModel<f64>> {
    let total = check(&x, &y, &w)?;
    let x_mean = x.t().dot(&w) / total;
    let y_mean = y.dot(&w) / total;
    let xc = &x - &x_mean.view().insert_axis(Axis(0));
    let yc = y.mapv(|v| v - y_mean);
    let xw = &xc * &w.insert_axis(Axis(1));
    let mut gram = xw.t().dot(&xc);
    for i in 0..gram.nrows() {
        gram[[i, i]] += reg;
    }
    let weights = solve_with_bump(gram, xw.t().dot(&yc).view(), x.ncols())?;
    let intercept = y_mean - x_mean.dot(&weights);
    let resid = &y - &(x.dot(&weights) + intercept);
    let loss = (&resid * &resid).dot(&w);
    Ok(LeafModel { kind: LeafKind::Ridge, weights, intercept, loss, n_rows: x.nrows() })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Minimizes the weighted mean NLL `Σwᵢ·nllᵢ / Σw + reg·‖w‖²/2` by Newton
/// steps with backtracking.
pub fn weighted_logistic(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, w: ArrayView1<'_, f64>, reg: f64) -> Result<LeafModel<f64>> {
    let total = check(&x, &y, &w)?;
    let d = x.ncols();
    let objective = |beta: &Array1<f64>, b: f64| -> f64 {
        let z = x.dot(beta) + b;
        let nll: f64 = z.iter().zip(y).zip(w).map(|((&z, &t), &wi)| wi * (softplus(z) - t * z)).sum();
        nll / total + reg * beta.dot(beta) / 2.0
    };
    let mut beta = Array1::<f64>::zeros(d);
    let p0 = (y.dot(&w) / total).clamp(1e-6, 1.0 - 1e-6);
    let mut b = (p0 / (1.0 - p0)).ln();
    let mut current = objective(&beta, b);
    for _ in 0..100 {
        let p = (x.dot(&beta) + b).mapv(sigmoid);
        let r = (&p - &y) * w;
        let mut grad = Array1::<f64>::zeros(d + 1);
        grad.slice_mut(s![..d]).assign(&(x.t().dot(&r) / total + &beta * reg));
        grad[d] = r.sum() / total;
        if grad.dot(&grad).sqrt() <= 1e-6 {
            break;
        }
        let sw = p.mapv(|v| v * (1.0 - v)) * w;
        let xs = &x * &sw.view().insert_axis(Axis(1));
        let mut h = Array2::<f64>::zeros((d + 1, d + 1));
        h.slice_mut(s![..d, ..d]).assign(&(x.t().dot(&xs) / total));
        let cross = xs.sum_axis(Axis(0)) / total;
        h.slice_mut(s![..d, d]).assign(&cross);
        h.slice_mut(s![d, ..d]).assign(&cross);
        h[[d, d]] = sw.sum() / total;
        for i in 0..d {
            h[[i, i]] += reg;
        }
        let step = solve_with_bump(h, grad.view(), d + 1)?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let nb = &beta - &(&step.slice(s![..d]) * t);
            let nbias = b - step[d] * t;
            let obj = objective(&nb, nbias);
            if obj <= current {
                improved = current - obj > f64::EPSILON * current.abs();
                beta = nb;
                b = nbias;
                current = obj;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(LeafModel { kind: LeafKind::Logistic, weights: beta, intercept: b, loss: current * total, n_rows: x.nrows() })
}
