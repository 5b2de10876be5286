//! CART decision trees: Gini impurity for binary classification, squared
//! error for regression. Rows route left iff `value ≤ threshold`.

use std::collections::BTreeSet;

use lmte_core::lmt::Task;
use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of features examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    All,
    /// `⌈√d⌉`
    Sqrt,
    /// `⌈d/3⌉`
    Third,
    Count(usize),
}

impl MaxFeatures {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification => MaxFeatures::Sqrt,
            Task::Regression => MaxFeatures::Third,
        }
    }

    pub fn resolve(self, d: usize) -> usize {
        let m = match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::Third => d.div_ceil(3),
            MaxFeatures::Count(n) => n,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig { max_depth: None, min_samples_split: 2, min_samples_leaf: 1, max_features: MaxFeatures::All }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CartNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Class-1 fraction (classification) or mean target (regression).
    Leaf { value: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub task: Task,
    pub n_features: usize,
    pub nodes: Vec<CartNode>,
}

/// Running label statistics of one side of a split.
#[derive(Clone, Copy, Default)]
struct Side {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Side {
    fn add(&mut self, y: f64) {
        self.n += 1.0;
        self.sum += y;
        self.sum_sq += y * y;
    }

    fn remove(&mut self, y: f64) {
        self.n -= 1.0;
        self.sum -= y;
        self.sum_sq -= y * y;
    }

    /// Impurity times the number of rows.
    fn cost(&self, task: Task) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        match task {
            Task::Classification => {
                let p = self.sum / self.n;
                2.0 * self.n * p * (1.0 - p)
            }
            Task::Regression => (self.sum_sq - self.sum * self.sum / self.n).max(0.0),
        }
    }
}

struct Builder<'a, R: Rng> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    task: Task,
    config: &'a CartConfig,
    m: usize,
    rng: &'a mut R,
    nodes: Vec<CartNode>,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&self, rows: &[usize]) -> CartNode {
        let sum: f64 = rows.iter().map(|&i| self.y[i]).sum();
        CartNode::Leaf { value: sum / rows.len() as f64, n: rows.len() }
    }

    /// Best split over `feature`: (weighted child cost, threshold).
    fn best_on(&self, rows: &[usize], feature: usize, total: Side) -> Option<(f64, f64)> {
        let mut sorted: Vec<(f64, f64)> = rows.iter().map(|&i| (self.x[[i, feature]], self.y[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut left = Side::default();
        let mut right = total;
        let mut best: Option<(f64, f64)> = None;
        for k in 0..sorted.len() - 1 {
            left.add(sorted[k].1);
            right.remove(sorted[k].1);
            let (lo, hi) = (sorted[k].0, sorted[k + 1].0);
            if lo == hi || k + 1 < min_leaf || sorted.len() - k - 1 < min_leaf {
                continue;
            }
            let cost = left.cost(self.task) + right.cost(self.task);
            if best.is_none_or(|(c, _)| cost < c) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some((cost, if mid < hi { mid } else { lo }));
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(self.leaf(&rows));
        let mut total = Side::default();
        for &i in &rows {
            total.add(self.y[i]);
        }
        let pure = total.cost(self.task) <= 1e-12 * total.n.max(1.0);
        if pure || rows.len() < self.config.min_samples_split.max(2) || self.config.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }

        // Features are drawn in random order; the first `m` are searched and
        // more are drawn only while none of them admits a split.
        let mut order: Vec<usize> = (0..self.x.ncols()).collect();
        order.shuffle(self.rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut searched = 0;
        let mut end = self.m;
        loop {
            let mut batch: Vec<usize> = order[searched..end].to_vec();
            batch.sort_unstable();
            for f in batch {
                if let Some((cost, thr)) = self.best_on(&rows, f, total) {
                    let better = match best {
                        None => true,
                        Some((c, bf, bt)) => cost < c || (cost == c && (f < bf || (f == bf && thr < bt))),
                    };
                    if better {
                        best = Some((cost, f, thr));
                    }
                }
            }
            searched = end;
            if best.is_some() || searched >= order.len() {
                break;
            }
            end += 1;
        }
        let Some((_, feature, threshold)) = best else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = CartNode::Split { feature, threshold, left, right };
        id
    }
}

fn check_inputs(x: &ArrayView2<'_, f64>, y: &ArrayView1<'_, f64>, task: Task) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Empty("training rows"));
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Config("training data must be finite".into()));
    }
    if task == Task::Classification && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::DegenerateTarget("classification labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Fits one tree on the rows listed in `rows` (repeats allowed).
pub fn fit_cart_on<R: Rng>(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    rows: Vec<usize>,
    task: Task,
    config: &CartConfig,
    rng: &mut R,
) -> Result<DecisionTree> {
    check_inputs(&x, &y, task)?;
    if rows.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    let m = config.max_features.resolve(x.ncols());
    let mut b = Builder { x, y, task, config, m, rng, nodes: Vec::new() };
    b.grow(rows, 0);
    Ok(DecisionTree { task, n_features: x.ncols(), nodes: b.nodes })
}

pub fn fit_cart<R: Rng>(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, task: Task, config: &CartConfig, rng: &mut R) -> Result<DecisionTree> {
    fit_cart_on(x, y, (0..x.nrows()).collect(), task, config, rng)
}

impl DecisionTree {
    /// Node ids from the root to the reached leaf.
    pub fn path(&self, row: &[f64]) -> Vec<usize> {
        let mut id = 0;
        let mut out = vec![0];
        while let CartNode::Split { feature, threshold, left, right } = self.nodes[id] {
            id = if row[feature] <= threshold { left } else { right };
            out.push(id);
        }
        out
    }

    /// Features tested on the row's root-to-leaf path.
    pub fn path_features(&self, row: &[f64]) -> BTreeSet<usize> {
        self.path(row)
            .into_iter()
            .filter_map(|id| match self.nodes[id] {
                CartNode::Split { feature, .. } => Some(feature),
                CartNode::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let id = *self.path(row).last().expect("path is never empty");
        match self.nodes[id] {
            CartNode::Leaf { value, .. } => value,
            CartNode::Split { .. } => unreachable!("paths end at leaves"),
        }
    }

    /// Class label (class-1 fraction above one half) or mean target.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let v = self.leaf_value(row);
        match self.task {
            Task::Classification => f64::from(u8::from(v > 0.5)),
            Task::Regression => v,
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[CartNode], id: usize) -> usize {
            match nodes[id] {
                CartNode::Leaf { .. } => 0,
                CartNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, CartNode::Leaf { .. })).count()
    }
}
