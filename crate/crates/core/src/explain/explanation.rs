//! Surrogate fitting and the context-plus-attribution explanation.

use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::encoder::SurrogateEncoder;
use super::metrics::{classification_fidelity, regression_fidelity};
use super::neighborhood::{LabelMode, Neighborhood};
use super::oracle::Oracle;
use crate::error::{Error, Result};
use crate::lmt::{decision_path, fit_lmt, format_number, EncodedFeature, LinearModelTree, LmtConfig, RuleConjunction, Task};
use crate::tabular::{Dataset, Schema};

pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Encoded feature label: the column name, or `column=category`.
    pub feature: String,
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub coefficient: f64,
    pub encoded_value: f64,
    /// `coefficient × encoded_value`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCell {
    pub feature: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleView {
    pub prediction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    /// Whether the surrogate's label or value agrees with the oracle at the
    /// test point (label match, or within 10% of the locality label spread).
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub task: Task,
    pub point: Vec<PointCell>,
    /// Probability of class 1 (classification) or predicted value.
    pub surrogate_prediction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleView>,
    pub context: RuleConjunction,
    pub leaf_id: usize,
    /// Leaf intercept; with the attribution values it sums to the leaf's
    /// pre-link output (the logit for logistic leaves).
    pub intercept: f64,
    pub attributions: Vec<Attribution>,
    /// Label agreement (classification) or RMSE / sd of labels (regression)
    /// of the surrogate on the synthetic neighborhood.
    pub fidelity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_changed: Option<bool>,
}

/// Attribution of one schema column; one-hot members are folded into their
/// column and the active category is named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAttribution {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub value: f64,
    pub coefficient: f64,
}

/// A linear model tree fitted to a neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub encoder: SurrogateEncoder,
    pub tree: LinearModelTree<f64>,
    /// Task of the explained oracle.
    pub task: Task,
    pub label_mode: LabelMode,
    pub fidelity: f64,
    /// Spread of the neighborhood labels, used for regression agreement.
    pub label_sd: f64,
}

impl Surrogate {
    pub fn fit(neighborhood: &Neighborhood, encoder: &SurrogateEncoder, config: &LmtConfig, label_mode: LabelMode) -> Result<Self> {
        let x = encoder.encode(&neighborhood.rows)?;
        let probability = neighborhood.task == Task::Classification && label_mode == LabelMode::Probability;
        let expected = if probability { Task::Regression } else { neighborhood.task };
        if config.task != expected {
            return Err(Error::Config(format!(
                "surrogate task {:?} does not match a {:?} neighborhood",
                config.task, neighborhood.task
            )));
        }
        let y: Array1<f64> = if probability {
            let p = neighborhood
                .probs
                .as_ref()
                .ok_or_else(|| Error::Config("probability labels requested but the oracle returned none".into()))?;
            Array1::from(p.clone())
        } else {
            Array1::from(neighborhood.labels.clone())
        };
        let min_leaf = config.resolved_min_leaf(encoder.width);
        if x.nrows() < min_leaf {
            return Err(Error::Config(format!(
                "neighborhood has {} rows but a leaf needs {min_leaf}; increase n_synthetic",
                x.nrows()
            )));
        }
        let tree = fit_lmt(x.view(), y.view(), config)?;
        let tree = LinearModelTree { schema_fingerprint: Some(encoder.schema.fingerprint()), ..tree };
        let labels = Array1::from(neighborhood.labels.clone());
        let fidelity = match neighborhood.task {
            Task::Classification => {
                let p = tree.predict_batch(x.view())?;
                let pred = p.mapv(|v| f64::from(u8::from(v >= 0.5)));
                classification_fidelity(pred.view(), labels.view())?
            }
            Task::Regression => regression_fidelity(tree.predict_batch(x.view())?.view(), labels.view())?,
        };
        let label_sd = std_dev(labels.view());
        Ok(Surrogate { encoder: encoder.clone(), tree, task: neighborhood.task, label_mode, fidelity, label_sd })
    }

    pub fn schema(&self) -> &Schema {
        &self.encoder.schema
    }

    /// Context and attributions for a raw row.
    pub fn explain(&self, x_t: &[f64], oracle: Option<&dyn Oracle>) -> Result<Explanation> {
        let enc = self.encoder.encode_row(x_t)?;
        let map = self.encoder.feature_map();
        let context = decision_path(&self.tree, &enc, &map)?;
        let (leaf_id, leaf) = self.tree.leaf_for(&enc)?;
        let attributions = map
            .features
            .iter()
            .zip(leaf.weights.iter().zip(&enc))
            .map(|(f, (&w, &v))| {
                let (feature, category) = match f {
                    EncodedFeature::Numeric { column, .. } => (column.clone(), None),
                    EncodedFeature::Category { column, category } => (format!("{column}={category}"), Some(category.clone())),
                };
                Attribution { feature, column: f.column().to_string(), category, coefficient: w, encoded_value: v, value: w * v }
            })
            .collect();
        let surrogate_prediction = leaf.predict(ArrayView1::from(&enc));
        let oracle = match oracle {
            Some(o) => Some(self.oracle_view(o, x_t, surrogate_prediction)?),
            None => None,
        };
        let schema = self.schema();
        let point = schema
            .columns
            .iter()
            .zip(schema.row_to_json(x_t).as_array().expect("row renders as an array"))
            .map(|(c, v)| PointCell { feature: c.name.clone(), value: v.clone() })
            .collect();
        Ok(Explanation {
            task: self.task,
            point,
            surrogate_prediction,
            oracle,
            context,
            leaf_id,
            intercept: leaf.intercept,
            attributions,
            fidelity: self.fidelity,
            leaf_changed: None,
        })
    }

    fn oracle_view(&self, oracle: &dyn Oracle, x_t: &[f64], surrogate: f64) -> Result<OracleView> {
        let row = Dataset::from_rows(self.schema().clone(), &[x_t.to_vec()])?;
        let p = oracle.predict(&row)?;
        let prediction = p.preds[0];
        let probability = p.probs.map(|v| v[0]);
        let agrees = match self.task {
            Task::Classification => f64::from(u8::from(surrogate >= 0.5)) == prediction,
            Task::Regression => (surrogate - prediction).abs() <= 0.1 * self.label_sd.max(f64::EPSILON),
        };
        Ok(OracleView { prediction, probability, agrees })
    }

    /// Re-routes `x_t` with `overrides` applied through the fitted tree.
    pub fn what_if(&self, x_t: &[f64], overrides: &Map<String, Value>, oracle: Option<&dyn Oracle>) -> Result<Explanation> {
        let modified = apply_overrides(self.schema(), x_t, overrides)?;
        let before = self.tree.leaf_index(&self.encoder.encode_row(x_t)?)?;
        let mut e = self.explain(&modified, oracle)?;
        e.leaf_changed = Some(e.leaf_id != before);
        Ok(e)
    }
}

fn std_dev(v: ArrayView1<'_, f64>) -> f64 {
    let n = v.len() as f64;
    if v.is_empty() {
        return 0.0;
    }
    let m = v.sum() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Copy of `row` with the named cells replaced.
pub fn apply_overrides(schema: &Schema, row: &[f64], overrides: &Map<String, Value>) -> Result<Vec<f64>> {
    schema.check_row(row)?;
    let mut out = row.to_vec();
    for (name, v) in overrides {
        let j = schema.index_of(name).ok_or_else(|| Error::invalid(format!("unknown feature `{name}`")))?;
        out[j] = schema.cell_from_json(&schema.columns[j], v)?;
    }
    Ok(out)
}

/// Fits the surrogate on `neighborhood` and explains `x_t`.
pub fn explain_point(
    x_t: &[f64],
    neighborhood: &Neighborhood,
    encoder: &SurrogateEncoder,
    config: &LmtConfig,
    label_mode: LabelMode,
) -> Result<(Surrogate, Explanation)> {
    let surrogate = Surrogate::fit(neighborhood, encoder, config, label_mode)?;
    let e = surrogate.explain(x_t, None)?;
    Ok((surrogate, e))
}

/// Columns ranked by absolute attribution, ties in schema order.
pub fn top_attributions(e: &Explanation, n: usize) -> Vec<RankedAttribution> {
    let mut folded: Vec<RankedAttribution> = Vec::new();
    for a in &e.attributions {
        let active = a.category.is_some() && a.encoded_value != 0.0;
        match folded.iter_mut().find(|r| r.feature == a.column) {
            Some(r) => {
                r.value += a.value;
                if active {
                    r.category = a.category.clone();
                    r.coefficient = a.coefficient;
                }
            }
            None => folded.push(RankedAttribution {
                feature: a.column.clone(),
                category: if active { a.category.clone() } else { None },
                value: a.value,
                coefficient: if a.category.is_none() || active { a.coefficient } else { 0.0 },
            }),
        }
    }
    folded.sort_by(|x, y| y.value.abs().total_cmp(&x.value.abs()));
    folded.truncate(n);
    folded
}

/// Context lines followed by an attribution table.
pub fn render_text(e: &Explanation, top_n: usize) -> String {
    let mut s = String::new();
    let label = match e.task {
        Task::Classification => "P(class 1)",
        Task::Regression => "prediction",
    };
    let _ = writeln!(s, "Surrogate {label}: {}", format_number(e.surrogate_prediction));
    if let Some(o) = &e.oracle {
        let _ = writeln!(s, "Target model: {}{}", format_number(o.prediction), if o.agrees { "" } else { " (surrogate disagrees)" });
    }
    let _ = writeln!(s, "Neighborhood fidelity: {}", format_number(e.fidelity));
    if let Some(changed) = e.leaf_changed {
        let _ = writeln!(s, "Leaf changed: {}", if changed { "yes" } else { "no" });
    }
    let _ = writeln!(s, "Context (leaf {}):", e.leaf_id);
    if e.context.is_empty() {
        let _ = writeln!(s, "  (always true)");
    }
    for c in &e.context.conditions {
        let _ = writeln!(s, "  {c}");
    }
    let ranked = top_attributions(e, top_n);
    let width = ranked.iter().map(|r| display_name(r).chars().count()).max().unwrap_or(7).max(7);
    let _ = writeln!(s, "Top {} attributions:", ranked.len());
    let _ = writeln!(s, "  {:<width$}  {:>12}  {:>12}", "feature", "attribution", "coefficient");
    for r in &ranked {
        let _ = writeln!(s, "  {:<width$}  {:>12}  {:>12}", display_name(r), format_number(r.value), format_number(r.coefficient));
    }
    s
}

fn display_name(r: &RankedAttribution) -> String {
    match &r.category {
        Some(c) => format!("{}={c}", r.feature),
        None => r.feature.clone(),
    }
}
