use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_means, solve_spd};
use crate::scalar::Scalar;

/// Probability assigned by a constant leaf fitted on a single class.
pub const ONE_CLASS_CLIP: f64 = 1e-6;
/// Regularization used when an unregularized ridge system is singular.
pub const RIDGE_SINGULAR_BUMP: f64 = 1e-8;

const LOGISTIC_GRAD_TOL: f64 = 1e-6;
const LOGISTIC_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafKind {
    Ridge,
    Logistic,
}

/// Linear (ridge) or logistic model fitted at a tree node.
///
/// `loss` is additive across disjoint row sets: the SSE for ridge leaves and
/// the summed negative log-likelihood plus `n·reg·‖w‖²/2` for logistic ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LeafModel<T: Scalar> {
    pub kind: LeafKind,
    #[serde(with = "crate::serde_vec")]
    pub weights: Array1<T>,
    pub intercept: T,
    pub loss: T,
    pub n_rows: usize,
}

impl<T: Scalar> LeafModel<T> {
    /// Linear predictor, before any link function.
    pub fn decision(&self, x: ArrayView1<'_, T>) -> T {
        self.weights.dot(&x) + self.intercept
    }

    /// Real-valued output for ridge leaves, class-1 probability for logistic.
    pub fn predict(&self, x: ArrayView1<'_, T>) -> T {
        let z = self.decision(x);
        match self.kind {
            LeafKind::Ridge => z,
            LeafKind::Logistic => sigmoid(z),
        }
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// log(1 + e^z) without overflow.
pub(crate) fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_shapes<T: Scalar>(x: &ArrayView2<'_, T>, y: &ArrayView1<'_, T>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Empty("leaf rows"));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
    }
    Ok(())
}

/// Ridge regression with an unpenalized intercept: solves
/// `(XcᵀXc + reg·I) w = Xcᵀyc` on centered data. A singular system at
/// `reg = 0` is retried with `reg = 1e-8`.
pub fn fit_ridge<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, reg: T) -> Result<LeafModel<T>> {
    check_shapes(&x, &y)?;
    if reg < T::zero() || !reg.is_finite() {
        return Err(Error::invalid("ridge regularization must be finite and non-negative"));
    }
    let x_mean = column_means(x);
    let y_mean = y.sum() / T::from_usize_lossy(y.len());
    let xc = &x - &x_mean.view().insert_axis(Axis(0));
    let yc = y.mapv(|v| v - y_mean);
    let gram = xc.t().dot(&xc);
    let rhs = xc.t().dot(&yc);
    let weights = solve_ridge_system(&gram, &rhs, reg)?;
    let intercept = y_mean - x_mean.dot(&weights);
    let resid = &y - &(x.dot(&weights) + intercept);
    let loss = resid.dot(&resid);
    Ok(LeafModel { kind: LeafKind::Ridge, weights, intercept, loss, n_rows: x.nrows() })
}

pub(crate) fn solve_ridge_system<T: Scalar>(gram: &Array2<T>, rhs: &Array1<T>, reg: T) -> Result<Array1<T>> {
    let d = gram.nrows();
    if d == 0 {
        return Ok(Array1::zeros(0));
    }
    let mut r = reg;
    for _ in 0..8 {
        let mut a = gram.clone();
        for i in 0..d {
            a[[i, i]] += r;
        }
        if let Some(w) = solve_spd(a.view(), rhs.view()) {
            if w.iter().all(|v| v.is_finite()) {
                return Ok(w);
            }
        }
        r = if r == T::zero() { T::c(RIDGE_SINGULAR_BUMP) } else { r * T::c(100.0) };
    }
    Err(Error::invalid("ridge system is singular"))
}

/// L2-penalized logistic regression, minimizing mean NLL + `reg·‖w‖²/2`
/// by damped Newton steps. Labels must be 0 or 1.
pub fn fit_logistic<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, reg: T) -> Result<LeafModel<T>> {
    fit_logistic_warm(x, y, reg, None)
}

pub(crate) fn fit_logistic_warm<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    reg: T,
    init: Option<(&Array1<T>, T)>,
) -> Result<LeafModel<T>> {
    check_shapes(&x, &y)?;
    if reg < T::zero() || !reg.is_finite() {
        return Err(Error::invalid("logistic regularization must be finite and non-negative"));
    }
    let n = x.nrows();
    let d = x.ncols();
    let nf = T::from_usize_lossy(n);
    let positives = y.iter().filter(|&&v| v > T::c(0.5)).count();
    if positives == 0 || positives == n {
        let p = if positives == 0 { T::c(ONE_CLASS_CLIP) } else { T::one() - T::c(ONE_CLASS_CLIP) };
        let intercept = (p / (T::one() - p)).ln();
        let loss = nf * -(T::one() - T::c(ONE_CLASS_CLIP)).ln();
        return Ok(LeafModel { kind: LeafKind::Logistic, weights: Array1::zeros(d), intercept, loss, n_rows: n });
    }

    let (mut w, mut b) = match init {
        Some((w0, b0)) if w0.len() == d => (w0.clone(), b0),
        _ => {
            let p = T::from_usize_lossy(positives) / nf;
            (Array1::zeros(d), (p / (T::one() - p)).ln())
        }
    };
    let objective = |w: &Array1<T>, b: T| -> T {
        let z = x.dot(w) + b;
        let nll: T = z.iter().zip(y.iter()).map(|(&z, &t)| softplus(z) - t * z).sum();
        nll / nf + reg * w.dot(w) / T::c(2.0)
    };
    let mut current = objective(&w, b);
    for _ in 0..LOGISTIC_MAX_ITER {
        let z = x.dot(&w) + b;
        let p = z.mapv(sigmoid);
        let r = &p - &y;
        let mut grad = Array1::<T>::zeros(d + 1);
        grad.slice_mut(ndarray::s![..d]).assign(&(x.t().dot(&r) / nf + &w * reg));
        grad[d] = r.sum() / nf;
        if grad.dot(&grad).sqrt() <= T::c(LOGISTIC_GRAD_TOL) {
            break;
        }
        let s = p.mapv(|v| v * (T::one() - v));
        let xs = &x * &s.view().insert_axis(Axis(1));
        let mut h = Array2::<T>::zeros((d + 1, d + 1));
        h.slice_mut(ndarray::s![..d, ..d]).assign(&(x.t().dot(&xs) / nf));
        let cross = xs.sum_axis(Axis(0)) / nf;
        h.slice_mut(ndarray::s![..d, d]).assign(&cross);
        h.slice_mut(ndarray::s![d, ..d]).assign(&cross);
        h[[d, d]] = s.sum() / nf;
        for i in 0..d {
            h[[i, i]] += reg;
        }
        let mut damping = T::c(1e-10);
        let step = loop {
            let mut hd = h.clone();
            for i in 0..=d {
                hd[[i, i]] += damping;
            }
            if let Some(step) = solve_spd(hd.view(), grad.view()) {
                break step;
            }
            damping *= T::c(100.0);
            if damping > T::c(1e6) {
                break grad.clone();
            }
        };
        // backtracking line search on the penalized objective
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let w_new = &w - &(step.slice(ndarray::s![..d]).to_owned() * t);
            let b_new = b - step[d] * t;
            let obj = objective(&w_new, b_new);
            if obj <= current {
                let done = current - obj <= T::epsilon() * current.abs();
                w = w_new;
                b = b_new;
                current = obj;
                accepted = !done;
                break;
            }
            t *= T::c(0.5);
        }
        if !accepted {
            break;
        }
    }
    let loss = current * nf;
    Ok(LeafModel { kind: LeafKind::Logistic, weights: w, intercept: b, loss, n_rows: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_general;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn exact_line_recovered() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64 * 0.5 - 2.0);
        let y = x.column(0).mapv(|v| 3.0 * v + 1.0);
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        assert!((m.weights[0] - 3.0).abs() < 1e-10);
        assert!((m.intercept - 1.0).abs() < 1e-10);
        assert!(m.loss < 1e-18);
    }

    #[test]
    fn huge_penalty_gives_mean() {
        let x: Array2<f64> = array![[1.0, 2.0], [3.0, -1.0], [0.0, 0.5], [2.0, 2.0]];
        let y: Array1<f64> = array![1.0, 4.0, -2.0, 3.0];
        let m = fit_ridge(x.view(), y.view(), 1e9).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-7));
        assert!((m.intercept - 1.5).abs() < 1e-6);
    }

    #[test]
    fn singular_system_auto_bumps() {
        let x: Array2<f64> = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let y: Array1<f64> = array![1.0, 2.0, 3.0];
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
        assert!(m.loss < 1e-9);
    }

    #[test]
    fn ridge_matches_dense_normal_equations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 50;
        let d = 4;
        let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] * 2.0 - x[[i, 2]] + rng.random_range(-0.1..0.1));
        let reg = 1e-3;
        let m = fit_ridge(x.view(), y.view(), reg).unwrap();
        // oracle: augmented [X 1] system with the intercept unpenalized
        let mut xa = Array2::<f64>::ones((n, d + 1));
        xa.slice_mut(ndarray::s![.., ..d]).assign(&x);
        let mut a = xa.t().dot(&xa);
        for i in 0..d {
            a[[i, i]] += reg;
        }
        let sol = solve_general(a.view(), xa.t().dot(&y).view()).unwrap();
        for i in 0..d {
            assert!((sol[i] - m.weights[i]).abs() < 1e-8);
        }
        assert!((sol[d] - m.intercept).abs() < 1e-8);
        let sse: f64 = (&y - &xa.dot(&sol)).mapv(|r| r * r).sum();
        assert!((sse - m.loss).abs() < 1e-8);
    }

    #[test]
    fn one_class_is_constant() {
        let x: Array2<f64> = array![[0.0], [1.0], [2.0]];
        let y: Array1<f64> = array![1.0, 1.0, 1.0];
        let m = fit_logistic(x.view(), y.view(), 1.0).unwrap();
        assert_eq!(m.weights[0], 0.0);
        let p = m.predict(x.row(0));
        assert!((p - (1.0 - 1e-6)).abs() < 1e-12);
        let m0 = fit_logistic(x.view(), (y * 0.0).view(), 1.0).unwrap();
        assert!((m0.predict(x.row(2)) - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 80;
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let c = if i % 2 == 0 { 3.0 } else { -3.0 };
            x[[i, 0]] = c + rng.random_range(-1.0..1.0);
            x[[i, 1]] = c + rng.random_range(-1.0..1.0);
            y[i] = if i % 2 == 0 { 1.0 } else { 0.0 };
        }
        let m = fit_logistic(x.view(), y.view(), 1e-3).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
        let acc = (0..n).filter(|&i| (m.predict(x.row(i)) > 0.5) == (y[i] > 0.5)).count();
        assert_eq!(acc, n);
    }

    #[test]
    fn symmetric_data_gives_near_zero_model() {
        let x: Array2<f64> = array![[-1.0], [-1.0], [1.0], [1.0], [0.0], [0.0]];
        let y: Array1<f64> = array![0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let m = fit_logistic(x.view(), y.view(), 1.0).unwrap();
        assert!(m.intercept.abs() < 0.2);
        assert!(m.weights[0].abs() < 1e-6);
    }

    #[test]
    fn logistic_reaches_stationary_point() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let n = 120;
        let x = Array2::from_shape_fn((n, 3), |_| StandardNormal.sample(&mut rng));
        let y = Array1::from_shape_fn(n, |i| {
            let z: f64 = x[[i, 0]] - 0.5 * x[[i, 1]] + rng.random_range(-1.0..1.0);
            if z > 0.0 { 1.0 } else { 0.0 }
        });
        let reg = 0.01;
        let m = fit_logistic(x.view(), y.view(), reg).unwrap();
        // finite-difference check that the gradient of the objective vanishes
        let obj = |w: &Array1<f64>, b: f64| {
            let z = x.dot(w) + b;
            z.iter().zip(y.iter()).map(|(&z, &t)| softplus(z) - t * z).sum::<f64>() / n as f64 + reg * w.dot(w) / 2.0
        };
        let h = 1e-6;
        for k in 0..3 {
            let mut wp = m.weights.clone();
            wp[k] += h;
            let mut wm = m.weights.clone();
            wm[k] -= h;
            let g = (obj(&wp, m.intercept) - obj(&wm, m.intercept)) / (2.0 * h);
            assert!(g.abs() < 1e-5, "grad {g}");
        }
        assert!((m.loss - obj(&m.weights, m.intercept) * n as f64).abs() < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let x: Array2<f32> = array![[0.0f32], [1.0], [2.0], [3.0]];
        let y: Array1<f32> = array![1.0f32, 3.0, 5.0, 7.0];
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        assert!((m.weights[0] - 2.0f32).abs() < 1e-4);
    }
}
