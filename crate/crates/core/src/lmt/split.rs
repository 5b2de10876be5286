use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::leaf::{fit_logistic_warm, solve_ridge_system, LeafModel};
use super::{LmtConfig, SplitSearch, Task};
use crate::error::Result;
use crate::scalar::Scalar;

/// Best threshold found for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SplitCandidate<T: Scalar> {
    pub feature_index: usize,
    pub threshold: T,
    /// Sum of the two child leaf-model losses.
    pub total_loss: T,
    pub left_rows: usize,
    pub right_rows: usize,
}

/// Candidate thresholds for one feature: midpoints between consecutive
/// distinct values (greedy), or the midpoints nearest to `n_candidates`
/// equally spaced quantiles (adaptive).
pub fn candidate_thresholds<T: Scalar>(values: ArrayView1<'_, T>, search: SplitSearch, n_candidates: usize) -> Vec<T> {
    let mut sorted: Vec<T> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Vec::new();
    }
    let mids: Vec<T> = distinct.windows(2).map(|w| (w[0] + w[1]) / T::c(2.0)).collect();
    match search {
        SplitSearch::Greedy => mids,
        SplitSearch::Adaptive if n_candidates >= mids.len() => mids,
        SplitSearch::Adaptive => {
            let n = sorted.len();
            let mut picked: Vec<usize> = (1..=n_candidates)
                .map(|i| {
                    let pos = (i * (n - 1)) / (n_candidates + 1);
                    let v = sorted[pos];
                    let k = distinct.partition_point(|&d| d < v);
                    k.min(mids.len() - 1)
                })
                .collect();
            picked.dedup();
            picked.into_iter().map(|k| mids[k]).collect()
        }
    }
}

/// Sufficient statistics of a ridge problem, used to score every
/// candidate of a sorted sweep with an exact refit.
#[derive(Clone)]
struct RidgeStats<T: Scalar> {
    n: usize,
    sx: Array1<T>,
    sy: T,
    sxx: Array2<T>,
    sxy: Array1<T>,
    syy: T,
}

impl<T: Scalar> RidgeStats<T> {
    fn new(d: usize) -> Self {
        RidgeStats {
            n: 0,
            sx: Array1::zeros(d),
            sy: T::zero(),
            sxx: Array2::zeros((d, d)),
            sxy: Array1::zeros(d),
            syy: T::zero(),
        }
    }

    fn add(&mut self, x: ArrayView1<'_, T>, y: T) {
        self.n += 1;
        self.sx += &x;
        self.sy += y;
        let d = x.len();
        for i in 0..d {
            let xi = x[i];
            if xi == T::zero() {
                continue;
            }
            for j in 0..d {
                self.sxx[[i, j]] += xi * x[j];
            }
        }
        self.sxy.scaled_add(y, &x);
        self.syy += y * y;
    }

    fn minus(&self, other: &Self) -> Self {
        RidgeStats {
            n: self.n - other.n,
            sx: &self.sx - &other.sx,
            sy: self.sy - other.sy,
            sxx: &self.sxx - &other.sxx,
            sxy: &self.sxy - &other.sxy,
            syy: self.syy - other.syy,
        }
    }

    /// SSE of the ridge solution on these rows.
    fn sse(&self, reg: T) -> Option<T> {
        let n = T::from_usize_lossy(self.n);
        let xm = &self.sx / n;
        let ym = self.sy / n;
        let d = xm.len();
        let mut gram = self.sxx.clone();
        for i in 0..d {
            for j in 0..d {
                gram[[i, j]] -= n * xm[i] * xm[j];
            }
        }
        let rhs = &self.sxy - &(&xm * (n * ym));
        let syy = self.syy - n * ym * ym;
        let w = solve_ridge_system(&gram, &rhs, reg).ok()?;
        let sse = syy - T::c(2.0) * w.dot(&rhs) + w.dot(&gram.dot(&w));
        Some(sse.max(T::zero()))
    }
}

/// Best split of a node, or `None` when no candidate leaves both children
/// with `min_leaf` rows and improves `parent_loss` by more than the
/// relative tolerance. Ties go to the lower feature index, then the lower threshold.
pub fn best_split<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    config: &LmtConfig,
    parent: &LeafModel<T>,
) -> Result<Option<SplitCandidate<T>>> {
    let n = x.nrows();
    let min_leaf = config.resolved_min_leaf(x.ncols());
    if n < 2 * min_leaf {
        return Ok(None);
    }
    let reg = T::c(config.resolved_regularization());
    let per_feature: Vec<Option<SplitCandidate<T>>> = (0..x.ncols())
        .into_par_iter()
        .map(|f| best_for_feature(x, y, f, config, min_leaf, reg, parent))
        .collect::<Result<_>>()?;
    let mut best: Option<SplitCandidate<T>> = None;
    for cand in per_feature.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| cand.total_loss < b.total_loss) {
            best = Some(cand);
        }
    }
    // relative gate, with an absolute floor so rounding noise on an already
    // perfect fit never counts as an improvement
    let floor = T::epsilon() * T::c(1e3) * y.dot(&y).max(T::one());
    let gate = parent.loss - (T::c(config.rel_tol) * parent.loss.abs()).max(floor);
    Ok(best.filter(|b| b.total_loss < gate))
}

fn best_for_feature<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    feature: usize,
    config: &LmtConfig,
    min_leaf: usize,
    reg: T,
    parent: &LeafModel<T>,
) -> Result<Option<SplitCandidate<T>>> {
    let col = x.column(feature);
    let n = x.nrows();
    let thresholds: Vec<T> = candidate_thresholds(col, config.search, config.n_candidates)
        .into_iter()
        .filter(|&t| {
            let left = col.iter().filter(|&&v| v <= t).count();
            left >= min_leaf && n - left >= min_leaf
        })
        .collect();
    if thresholds.is_empty() {
        return Ok(None);
    }
    let scored: Vec<(T, T, usize)> = match config.task {
        Task::Regression => score_ridge_sweep(x, y, feature, &thresholds, reg),
        Task::Classification => score_logistic(x, y, feature, &thresholds, reg, parent)?,
    };
    let mut best: Option<SplitCandidate<T>> = None;
    for (threshold, total_loss, left_rows) in scored {
        if !total_loss.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| total_loss < b.total_loss) {
            best = Some(SplitCandidate { feature_index: feature, threshold, total_loss, left_rows, right_rows: n - left_rows });
        }
    }
    Ok(best)
}

fn score_ridge_sweep<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    feature: usize,
    thresholds: &[T],
    reg: T,
) -> Vec<(T, T, usize)> {
    let d = x.ncols();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| x[[a, feature]].partial_cmp(&x[[b, feature]]).expect("finite").then(a.cmp(&b)));
    let mut total = RidgeStats::new(d);
    for i in 0..x.nrows() {
        total.add(x.row(i), y[i]);
    }
    let mut left = RidgeStats::new(d);
    let mut cursor = 0;
    let mut out = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        while cursor < order.len() && x[[order[cursor], feature]] <= t {
            left.add(x.row(order[cursor]), y[order[cursor]]);
            cursor += 1;
        }
        let right = total.minus(&left);
        let loss = match (left.sse(reg), right.sse(reg)) {
            (Some(a), Some(b)) => a + b,
            _ => T::infinity(),
        };
        out.push((t, loss, left.n));
    }
    out
}

fn score_logistic<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    feature: usize,
    thresholds: &[T],
    reg: T,
    parent: &LeafModel<T>,
) -> Result<Vec<(T, T, usize)>> {
    let col = x.column(feature);
    let init = Some((&parent.weights, parent.intercept));
    thresholds
        .iter()
        .map(|&t| {
            let (li, ri): (Vec<usize>, Vec<usize>) = (0..x.nrows()).partition(|&i| col[i] <= t);
            let lx = x.select(Axis(0), &li);
            let ly = y.select(Axis(0), &li);
            let rx = x.select(Axis(0), &ri);
            let ry = y.select(Axis(0), &ri);
            let l = fit_logistic_warm(lx.view(), ly.view(), reg, init)?;
            let r = fit_logistic_warm(rx.view(), ry.view(), reg, init)?;
            Ok((t, l.loss + r.loss, li.len()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmt::leaf::fit_ridge;
    use ndarray::Array2;

    fn piecewise(n: usize) -> (Array2<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
        let y = x.column(0).mapv(|v| if v < 0.0 { v } else { 2.0 * v });
        (x, y)
    }

    fn exhaustive_oracle(x: &Array2<f64>, y: &Array1<f64>, min_leaf: usize, reg: f64) -> (usize, f64, f64) {
        let mut best = (0, f64::NAN, f64::INFINITY);
        for f in 0..x.ncols() {
            let mut vals: Vec<f64> = x.column(f).to_vec();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (li, ri): (Vec<usize>, Vec<usize>) = (0..x.nrows()).partition(|&i| x[[i, f]] <= t);
                if li.len() < min_leaf || ri.len() < min_leaf {
                    continue;
                }
                let l = fit_ridge(x.select(Axis(0), &li).view(), y.select(Axis(0), &li).view(), reg).unwrap();
                let r = fit_ridge(x.select(Axis(0), &ri).view(), y.select(Axis(0), &ri).view(), reg).unwrap();
                if l.loss + r.loss < best.2 {
                    best = (f, t, l.loss + r.loss);
                }
            }
        }
        best
    }

    #[test]
    fn finds_the_kink() {
        let (x, y) = piecewise(200);
        let cfg = LmtConfig { min_leaf: Some(20), ..LmtConfig::regression() };
        let parent = fit_ridge(x.view(), y.view(), 1e-3).unwrap();
        let s = best_split(x.view(), y.view(), &cfg, &parent).unwrap().unwrap();
        assert!(s.threshold.abs() <= 0.1, "threshold {}", s.threshold);
        let oracle = exhaustive_oracle(&x, &y, 20, 1e-3);
        assert_eq!(s.feature_index, oracle.0);
        assert!((s.threshold - oracle.1).abs() < 1e-12);
        assert!((s.total_loss - oracle.2).abs() < 1e-6 * oracle.2.max(1e-6) + 1e-9);
    }

    #[test]
    fn sweep_scores_match_direct_refits() {
        let x = Array2::from_shape_fn((60, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64 / 3.0 + j as f64);
        let y = Array1::from_shape_fn(60, |i| (i as f64 * 0.37).sin() * 3.0 + x[[i, 1]]);
        let cfg = LmtConfig { min_leaf: Some(5), ..LmtConfig::regression() };
        let parent = fit_ridge(x.view(), y.view(), 1e-3).unwrap();
        let s = best_split(x.view(), y.view(), &cfg, &parent).unwrap().unwrap();
        let oracle = exhaustive_oracle(&x, &y, 5, 1e-3);
        assert_eq!((s.feature_index, s.threshold), (oracle.0, oracle.1));
        assert!((s.total_loss - oracle.2).abs() < 1e-6 * oracle.2);
    }

    #[test]
    fn constant_feature_never_chosen() {
        let (x1, y) = piecewise(100);
        let mut x = Array2::zeros((100, 2));
        x.column_mut(0).fill(4.2);
        x.column_mut(1).assign(&x1.column(0));
        let cfg = LmtConfig { min_leaf: Some(10), ..LmtConfig::regression() };
        assert!(candidate_thresholds(x.column(0), SplitSearch::Greedy, 50).is_empty());
        let parent = fit_ridge(x.view(), y.view(), 1e-3).unwrap();
        let s = best_split(x.view(), y.view(), &cfg, &parent).unwrap().unwrap();
        assert_eq!(s.feature_index, 1);
    }

    #[test]
    fn adaptive_with_many_candidates_equals_greedy() {
        let (x, y) = piecewise(80);
        let greedy = LmtConfig { min_leaf: Some(10), search: SplitSearch::Greedy, ..LmtConfig::regression() };
        let adaptive = LmtConfig { search: SplitSearch::Adaptive, n_candidates: 200, ..greedy.clone() };
        let parent = fit_ridge(x.view(), y.view(), 1e-3).unwrap();
        let a = best_split(x.view(), y.view(), &greedy, &parent).unwrap();
        let b = best_split(x.view(), y.view(), &adaptive, &parent).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adaptive_thresholds_are_a_subset_of_greedy() {
        let v = Array1::from_shape_fn(300, |i| ((i * 37) % 101) as f64 * 0.5);
        let g = candidate_thresholds(v.view(), SplitSearch::Greedy, 0);
        let a = candidate_thresholds(v.view(), SplitSearch::Adaptive, 50);
        assert!(a.len() <= 50 && !a.is_empty());
        assert!(a.iter().all(|t| g.contains(t)));
    }

    #[test]
    fn no_split_on_perfect_fit() {
        let x = Array2::from_shape_fn((50, 1), |(i, _)| i as f64);
        let y = x.column(0).mapv(|v| 2.0 * v - 1.0);
        let cfg = LmtConfig { min_leaf: Some(5), leaf_regularization: Some(0.0), ..LmtConfig::regression() };
        let parent = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        assert!(best_split(x.view(), y.view(), &cfg, &parent).unwrap().is_none());
    }
}
