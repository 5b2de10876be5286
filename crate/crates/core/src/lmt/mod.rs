//! Linear model trees: axis-aligned splits chosen to minimize the loss of
//! the linear (ridge) or logistic models fitted in the two children.

mod leaf;
mod rules;
mod split;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use leaf::{fit_logistic, fit_ridge, LeafKind, LeafModel, ONE_CLASS_CLIP, RIDGE_SINGULAR_BUMP};
pub use rules::{
    decision_path, format_number, Condition, ConditionValue, EncodedFeature, FeatureMap, Operator, RuleConjunction,
};
pub use split::{best_split, candidate_thresholds, SplitCandidate};

pub const DEFAULT_RIDGE_REG: f64 = 1e-3;
pub const DEFAULT_LOGISTIC_REG: f64 = 1e-3;
pub const DEFAULT_REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSearch {
    /// Every midpoint between consecutive distinct values.
    Greedy,
    /// `n_candidates` quantile-spaced midpoints per feature.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmtConfig {
    pub task: Task,
    pub max_depth: usize,
    /// Defaults to `max(20, width + 1)`.
    #[serde(default)]
    pub min_leaf: Option<usize>,
    pub search: SplitSearch,
    pub n_candidates: usize,
    /// Defaults per task: ridge 1e-3, logistic 1e-3.
    #[serde(default)]
    pub leaf_regularization: Option<f64>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}

impl LmtConfig {
    /// Logistic leaves, depth 4, adaptive search over 50 thresholds.
    pub fn classification() -> Self {
        LmtConfig {
            task: Task::Classification,
            max_depth: 4,
            min_leaf: None,
            search: SplitSearch::Adaptive,
            n_candidates: 50,
            leaf_regularization: None,
            rel_tol: DEFAULT_REL_TOL,
            seed: 0,
        }
    }

    /// Ridge leaves, depth 2, greedy search.
    pub fn regression() -> Self {
        LmtConfig {
            task: Task::Regression,
            max_depth: 2,
            min_leaf: None,
            search: SplitSearch::Greedy,
            n_candidates: 50,
            leaf_regularization: None,
            rel_tol: DEFAULT_REL_TOL,
            seed: 0,
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification => Self::classification(),
            Task::Regression => Self::regression(),
        }
    }

    pub fn resolved_min_leaf(&self, width: usize) -> usize {
        self.min_leaf.unwrap_or_else(|| 20.max(width + 1)).max(1)
    }

    pub fn resolved_regularization(&self) -> f64 {
        self.leaf_regularization.unwrap_or(match self.task {
            Task::Regression => DEFAULT_RIDGE_REG,
            Task::Classification => DEFAULT_LOGISTIC_REG,
        })
    }

    pub(crate) fn fit_leaf<T: Scalar>(&self, x: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> Result<LeafModel<T>> {
        let reg = T::c(self.resolved_regularization());
        match self.task {
            Task::Regression => fit_ridge(x, y, reg),
            Task::Classification => fit_logistic(x, y, reg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", bound = "")]
pub enum Node<T: Scalar> {
    /// Rows with `x[feature] ≤ threshold` go to `left`.
    Split { feature: usize, threshold: T, left: usize, right: usize },
    Leaf { model: LeafModel<T> },
}

/// Binary tree stored in pre-order; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearModelTree<T: Scalar> {
    pub n_features: usize,
    pub config: LmtConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_fingerprint: Option<String>,
    pub nodes: Vec<Node<T>>,
}

pub fn fit_lmt<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, config: &LmtConfig) -> Result<LinearModelTree<T>> {
    if x.nrows() == 0 {
        return Err(Error::Empty("training rows"));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
    }
    let min_leaf = config.resolved_min_leaf(x.ncols());
    if x.nrows() < min_leaf {
        return Err(Error::Config(format!(
            "{} rows cannot fill a leaf of min_leaf = {min_leaf}; generate a larger neighborhood",
            x.nrows()
        )));
    }
    if config.task == Task::Classification && y.iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::invalid("classification labels must be 0 or 1"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    let mut config = config.clone();
    config.min_leaf = Some(min_leaf);
    config.leaf_regularization = Some(config.resolved_regularization());
    let mut nodes = Vec::new();
    grow(x, y, &config, 0, &mut nodes)?;
    Ok(LinearModelTree { n_features: x.ncols(), config, schema_fingerprint: None, nodes })
}

fn grow<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    config: &LmtConfig,
    depth: usize,
    nodes: &mut Vec<Node<T>>,
) -> Result<usize> {
    let model = config.fit_leaf(x, y)?;
    let id = nodes.len();
    let split = if depth < config.max_depth { best_split(x, y, config, &model)? } else { None };
    let Some(split) = split else {
        nodes.push(Node::Leaf { model });
        return Ok(id);
    };
    nodes.push(Node::Split { feature: split.feature_index, threshold: split.threshold, left: 0, right: 0 });
    let col = x.column(split.feature_index);
    let (li, ri): (Vec<usize>, Vec<usize>) = (0..x.nrows()).partition(|&i| col[i] <= split.threshold);
    let (lx, ly) = (x.select(Axis(0), &li), y.select(Axis(0), &li));
    let (rx, ry) = (x.select(Axis(0), &ri), y.select(Axis(0), &ri));
    let left = grow(lx.view(), ly.view(), config, depth + 1, nodes)?;
    let right = grow(rx.view(), ry.view(), config, depth + 1, nodes)?;
    if let Node::Split { left: l, right: r, .. } = &mut nodes[id] {
        *l = left;
        *r = right;
    }
    Ok(id)
}

impl<T: Scalar> LinearModelTree<T> {
    /// Builds a tree from explicit nodes, checking that every child index
    /// is valid and every leaf has the right width.
    pub fn from_nodes(nodes: Vec<Node<T>>, n_features: usize, config: LmtConfig) -> Result<Self> {
        let tree = LinearModelTree { n_features, config, schema_fingerprint: None, nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("tree has no nodes"));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if id >= self.nodes.len() || std::mem::replace(&mut seen[id], true) {
                return Err(Error::invalid(format!("node {id} is missing or shared")));
            }
            match &self.nodes[id] {
                Node::Split { feature, left, right, .. } => {
                    if *feature >= self.n_features {
                        return Err(Error::invalid(format!("node {id} splits on unknown feature {feature}")));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf { model } => {
                    if model.width() != self.n_features {
                        return Err(Error::DimensionMismatch { expected: self.n_features, found: model.width() });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_width(&self, point: &[T]) -> Result<()> {
        if point.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, found: point.len() });
        }
        Ok(())
    }

    /// Visited nodes with the branch taken (`true` = left); the final entry is the leaf.
    pub fn path(&self, point: &[T]) -> Result<Vec<(usize, bool)>> {
        self.check_width(point)?;
        let mut out = Vec::new();
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    let go_left = point[*feature] <= *threshold;
                    out.push((id, go_left));
                    id = if go_left { *left } else { *right };
                }
                Node::Leaf { .. } => {
                    out.push((id, false));
                    return Ok(out);
                }
            }
        }
    }

    pub fn leaf_index(&self, point: &[T]) -> Result<usize> {
        Ok(self.path(point)?.last().expect("path ends at a leaf").0)
    }

    pub fn leaf(&self, id: usize) -> Option<&LeafModel<T>> {
        match self.nodes.get(id)? {
            Node::Leaf { model } => Some(model),
            Node::Split { .. } => None,
        }
    }

    pub fn leaf_for(&self, point: &[T]) -> Result<(usize, &LeafModel<T>)> {
        let id = self.leaf_index(point)?;
        Ok((id, self.leaf(id).expect("leaf index")))
    }

    /// Regression value or class-1 probability.
    pub fn predict(&self, point: &[T]) -> Result<T> {
        let (_, leaf) = self.leaf_for(point)?;
        Ok(leaf.predict(ArrayView1::from(point)))
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let mut out = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            let row = row.to_vec();
            out[i] = self.predict(&row)?;
        }
        Ok(out)
    }

    /// Hard labels for classification trees (probability > 0.5), values otherwise.
    pub fn predict_labels(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let p = self.predict_batch(x)?;
        Ok(match self.config.task {
            Task::Classification => p.mapv(|v| if v > T::c(0.5) { T::one() } else { T::zero() }),
            Task::Regression => p,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk<T: Scalar>(nodes: &[Node<T>], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &LeafModel<T>)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Leaf { model } => Some((i, model)),
            Node::Split { .. } => None,
        })
    }

    pub fn total_leaf_loss(&self) -> T {
        self.leaves().map(|(_, m)| m.loss).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: Self = serde_json::from_str(text)?;
        tree.validate()?;
        Ok(tree)
    }
}

#[cfg(test)]
mod tests;
