use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LinearModelTree, Node};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tabular::{ColumnKind, Schema};

/// What one encoded column means in terms of the raw schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EncodedFeature {
    /// `raw = encoded · scale + offset`, with `scale > 0`.
    Numeric { column: String, scale: f64, offset: f64 },
    /// One-hot indicator of `category` in `column`.
    Category { column: String, category: String },
}

impl EncodedFeature {
    pub fn column(&self) -> &str {
        match self {
            EncodedFeature::Numeric { column, .. } | EncodedFeature::Category { column, .. } => column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub features: Vec<EncodedFeature>,
}

impl FeatureMap {
    /// Raw numeric values followed by one-hot blocks, in schema order.
    pub fn identity(schema: &Schema) -> Self {
        let mut features = Vec::new();
        for c in &schema.columns {
            match c.kind {
                ColumnKind::Numerical => {
                    features.push(EncodedFeature::Numeric { column: c.name.clone(), scale: 1.0, offset: 0.0 })
                }
                ColumnKind::Categorical => features.extend(
                    c.categories
                        .iter()
                        .map(|cat| EncodedFeature::Category { column: c.name.clone(), category: cat.clone() }),
                ),
            }
        }
        FeatureMap { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Le => "≤",
            Operator::Gt => ">",
            Operator::Eq => "=",
            Operator::Ne => "≠",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditionValue {
    Number(f64),
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub op: Operator,
    pub value: ConditionValue,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            ConditionValue::Number(v) => write!(f, "{} {} {}", self.feature, self.op, format_number(*v)),
            ConditionValue::Category(c) => write!(f, "{} {} {}", self.feature, self.op, c),
        }
    }
}

/// Short decimal rendering: at most four decimals, trailing zeros dropped.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Conjunction of the split conditions on a root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleConjunction {
    pub conditions: Vec<Condition>,
    pub leaf: usize,
}

impl RuleConjunction {
    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    /// Checks a raw schema row against every condition.
    pub fn is_satisfied_by(&self, schema: &Schema, row: &[f64]) -> bool {
        self.conditions.iter().all(|c| {
            let Some(j) = schema.index_of(&c.feature) else { return false };
            let v = row[j];
            match (&c.value, c.op) {
                (ConditionValue::Number(t), Operator::Le) => v <= *t,
                (ConditionValue::Number(t), Operator::Gt) => v > *t,
                (ConditionValue::Category(cat), op) => {
                    let col = &schema.columns[j];
                    let is = col.category_index(cat).is_some_and(|k| k as f64 == v);
                    match op {
                        Operator::Eq => is,
                        Operator::Ne => !is,
                        _ => false,
                    }
                }
                (ConditionValue::Number(t), Operator::Eq) => v == *t,
                (ConditionValue::Number(t), Operator::Ne) => v != *t,
            }
        })
    }
}

impl fmt::Display for RuleConjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conditions.is_empty() {
            return f.write_str("(always true)");
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Bounds {
    lo: Option<f64>,
    hi: Option<f64>,
    equal: Option<String>,
    not_equal: Vec<String>,
}

/// Context rule for `point` (encoded), in raw feature names. Conditions on
/// the same feature are merged into one interval; an equality on a
/// categorical column subsumes its inequalities.
pub fn decision_path<T: Scalar>(tree: &LinearModelTree<T>, point: &[T], map: &FeatureMap) -> Result<RuleConjunction> {
    if map.len() != tree.n_features {
        return Err(Error::DimensionMismatch { expected: tree.n_features, found: map.len() });
    }
    let path = tree.path(point)?;
    let mut order: Vec<String> = Vec::new();
    let mut bounds: Vec<Bounds> = Vec::new();
    let mut leaf = 0;
    for (node, went_left) in path {
        let Node::Split { feature, threshold, .. } = &tree.nodes[node] else {
            leaf = node;
            continue;
        };
        let enc = &map.features[*feature];
        let name = enc.column().to_string();
        let slot = match order.iter().position(|n| *n == name) {
            Some(k) => k,
            None => {
                order.push(name);
                bounds.push(Bounds::default());
                order.len() - 1
            }
        };
        let b = &mut bounds[slot];
        match enc {
            EncodedFeature::Numeric { scale, offset, .. } => {
                let raw = threshold.f64() * scale + offset;
                if went_left {
                    b.hi = Some(b.hi.map_or(raw, |h| h.min(raw)));
                } else {
                    b.lo = Some(b.lo.map_or(raw, |l| l.max(raw)));
                }
            }
            EncodedFeature::Category { category, .. } => {
                // indicator ≤ threshold (left) means the category is absent
                if went_left {
                    if !b.not_equal.contains(category) {
                        b.not_equal.push(category.clone());
                    }
                } else {
                    b.equal = Some(category.clone());
                }
            }
        }
    }
    let mut conditions = Vec::new();
    for (name, b) in order.into_iter().zip(bounds) {
        if let Some(lo) = b.lo {
            conditions.push(Condition { feature: name.clone(), op: Operator::Gt, value: ConditionValue::Number(lo) });
        }
        if let Some(hi) = b.hi {
            conditions.push(Condition { feature: name.clone(), op: Operator::Le, value: ConditionValue::Number(hi) });
        }
        if let Some(eq) = b.equal {
            conditions.push(Condition { feature: name, op: Operator::Eq, value: ConditionValue::Category(eq) });
        } else {
            for ne in b.not_equal {
                conditions.push(Condition { feature: name.clone(), op: Operator::Ne, value: ConditionValue::Category(ne) });
            }
        }
    }
    Ok(RuleConjunction { conditions, leaf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmt::{LeafKind, LeafModel, LmtConfig, Node};
    use crate::tabular::Column;
    use ndarray::Array1;

    fn leaf(d: usize) -> Node<f64> {
        Node::Leaf {
            model: LeafModel { kind: LeafKind::Logistic, weights: Array1::zeros(d), intercept: 0.0, loss: 0.0, n_rows: 1 },
        }
    }

    fn split(feature: usize, threshold: f64, left: usize, right: usize) -> Node<f64> {
        Node::Split { feature, threshold, left, right }
    }

    /// Two-level tree shaped like the credit example: a split on the account
    /// count at 3.5, then on utilization at 81.4 on the right.
    fn credit_tree() -> LinearModelTree<f64> {
        let nodes = vec![split(0, 3.5, 1, 2), leaf(2), split(1, 81.4, 3, 4), leaf(2), leaf(2)];
        LinearModelTree::from_nodes(nodes, 2, LmtConfig::classification()).unwrap()
    }

    #[test]
    fn credit_example_context() {
        let schema =
            Schema::new(vec![Column::numerical("acc_open_past_24mths"), Column::numerical("all_util")]).unwrap();
        let tree = credit_tree();
        let map = FeatureMap::identity(&schema);
        let rule = decision_path(&tree, &[24.0, 78.0], &map).unwrap();
        assert_eq!(rule.to_string(), "acc_open_past_24mths > 3.5 AND all_util ≤ 81.4");
        assert_eq!(rule.leaf, 3);
        assert!(rule.is_satisfied_by(&schema, &[24.0, 78.0]));
        assert!(!rule.is_satisfied_by(&schema, &[24.0, 90.0]));
        let other = decision_path(&tree, &[24.0, 90.0], &map).unwrap();
        assert_eq!(other.to_string(), "acc_open_past_24mths > 3.5 AND all_util > 81.4");
        assert_eq!(other.leaf, 4);
    }

    #[test]
    fn single_leaf_gives_empty_context() {
        let tree = LinearModelTree::from_nodes(vec![leaf(1)], 1, LmtConfig::regression()).unwrap();
        let schema = Schema::new(vec![Column::numerical("x")]).unwrap();
        let rule = decision_path(&tree, &[3.0], &FeatureMap::identity(&schema)).unwrap();
        assert!(rule.is_empty());
        assert_eq!(rule.to_string(), "(always true)");
        assert!(rule.is_satisfied_by(&schema, &[1e9]));
    }

    #[test]
    fn nested_thresholds_merge() {
        let nodes = vec![split(0, 5.0, 1, 4), split(0, 3.0, 2, 3), leaf(1), leaf(1), leaf(1)];
        let tree = LinearModelTree::from_nodes(nodes, 1, LmtConfig::regression()).unwrap();
        let schema = Schema::new(vec![Column::numerical("x")]).unwrap();
        let rule = decision_path(&tree, &[1.0], &FeatureMap::identity(&schema)).unwrap();
        assert_eq!(rule.to_string(), "x ≤ 3");
    }

    #[test]
    fn one_hot_rendering_and_scaled_thresholds() {
        let schema = Schema::new(vec![Column::numerical("age"), Column::categorical("color", ["r", "g", "b"])]).unwrap();
        let map = FeatureMap {
            features: vec![
                EncodedFeature::Numeric { column: "age".into(), scale: 10.0, offset: 40.0 },
                EncodedFeature::Category { column: "color".into(), category: "r".into() },
                EncodedFeature::Category { column: "color".into(), category: "g".into() },
                EncodedFeature::Category { column: "color".into(), category: "b".into() },
            ],
        };
        // color=r? no → color=g? yes → age ≤ 0.5 (raw 45)
        let nodes = vec![split(1, 0.5, 1, 6), split(2, 0.5, 2, 3), leaf(4), split(0, 0.5, 4, 5), leaf(4), leaf(4), leaf(4)];
        let tree = LinearModelTree::from_nodes(nodes, 4, LmtConfig::regression()).unwrap();
        let rule = decision_path(&tree, &[0.2, 0.0, 1.0, 0.0], &map).unwrap();
        assert_eq!(rule.to_string(), "color = g AND age ≤ 45");
        assert!(rule.is_satisfied_by(&schema, &[42.0, 1.0]));
        let rule = decision_path(&tree, &[0.2, 0.0, 0.0, 1.0], &map).unwrap();
        assert_eq!(rule.to_string(), "color ≠ r AND color ≠ g");
        assert!(rule.is_satisfied_by(&schema, &[42.0, 2.0]));
    }

    #[test]
    fn numbers_render_compactly() {
        assert_eq!(format_number(81.4), "81.4");
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(-0.00001), "0");
        assert_eq!(format_number(0.123456), "0.1235");
    }
}
