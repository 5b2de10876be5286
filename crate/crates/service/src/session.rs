//! Session specs and the fitted state behind one session id.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use lmte_core::explain::{make_oracle, Explanation, Oracle, OracleRegistry, Session, SessionConfig};
use lmte_core::lmt::{EncodedFeature, FeatureMap, LinearModelTree, Node};
use lmte_core::tabular::{load_csv, Dataset, Schema, SchemaSource};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Everything needed to (re)build a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub train_csv_path: PathBuf,
    /// Defaults to the `<stem>.schema.json` sidecar when present, else the
    /// schema is inferred from the CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_path: Option<PathBuf>,
    /// Columns removed before fitting, such as a label column.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drop_columns: Vec<String>,
    pub oracle_spec: Value,
    #[serde(default)]
    pub config: SessionConfig,
    /// Test point explained at creation, as a JSON array or object.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Value>,
}

impl SessionSpec {
    pub fn resolved_schema_path(&self) -> Option<PathBuf> {
        self.schema_path.clone().or_else(|| {
            let sidecar = self.train_csv_path.with_extension("schema.json");
            sidecar.exists().then_some(sidecar)
        })
    }

    /// Training rows with `drop_columns` removed.
    pub fn load_train(&self) -> Result<Dataset> {
        load_training(&self.train_csv_path, self.resolved_schema_path().as_deref(), &self.drop_columns)
    }
}

pub fn load_training(csv: &Path, schema: Option<&Path>, drop: &[String]) -> Result<Dataset> {
    let source = match schema {
        Some(p) => SchemaSource::Given(Schema::load(p)?),
        None => SchemaSource::default(),
    };
    let mut data = load_csv(csv, source)?;
    for name in drop {
        data = data.split_column(name)?.0;
    }
    Ok(data)
}

/// One split of a serialized tree with its threshold in raw feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSplit {
    pub node: usize,
    pub feature: String,
    /// Numeric splits: rows with value ≤ threshold go left.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Categorical splits: rows equal to this category go right.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeView {
    pub tree: LinearModelTree<f64>,
    pub features: FeatureMap,
    pub splits: Vec<RawSplit>,
}

impl TreeView {
    pub fn of(session: &Session) -> Self {
        let features = session.surrogate.encoder.feature_map();
        let tree = session.surrogate.tree.clone();
        let splits = tree
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(node, n)| match n {
                Node::Split { feature, threshold, left, right } => Some(match &features.features[*feature] {
                    EncodedFeature::Numeric { column, scale, offset } => RawSplit {
                        node,
                        feature: column.clone(),
                        threshold: Some(threshold * scale + offset),
                        category: None,
                        left: *left,
                        right: *right,
                    },
                    EncodedFeature::Category { column, category } => RawSplit {
                        node,
                        feature: column.clone(),
                        threshold: None,
                        category: Some(category.clone()),
                        left: *left,
                        right: *right,
                    },
                }),
                Node::Leaf { .. } => None,
            })
            .collect();
        TreeView { tree, features, splits }
    }
}

type PointKey = Vec<u64>;

fn key(point: &[f64]) -> PointKey {
    point.iter().map(|v| v.to_bits()).collect()
}

/// A live session: training data, oracle and the pipelines fitted so far,
/// one per explained point.
pub struct LiveSession {
    pub id: String,
    pub spec: SessionSpec,
    pub train: Dataset,
    oracle: Arc<dyn Oracle>,
    primary: Option<Vec<f64>>,
    fits: Mutex<BTreeMap<PointKey, Arc<Session>>>,
}

impl LiveSession {
    /// Loads the data and builds the oracle; fits the creation point if the
    /// spec names one.
    pub fn create(id: String, spec: SessionSpec, registry: &OracleRegistry) -> Result<Self> {
        spec.config.validate()?;
        let train = spec.load_train()?;
        let oracle = make_oracle(&spec.oracle_spec, registry, &train.schema)?;
        let primary = spec.point.as_ref().map(|p| train.schema.row_from_json(p)).transpose()?;
        let live = LiveSession { id, spec, train, oracle, primary, fits: Mutex::new(BTreeMap::new()) };
        if let Some(p) = live.primary.clone() {
            live.fitted(&p, false)?;
        }
        Ok(live)
    }

    pub fn schema(&self) -> &Schema {
        &self.train.schema
    }

    pub fn primary(&self) -> Option<&[f64]> {
        self.primary.as_deref()
    }

    /// Parses a request point, falling back to the creation point.
    pub fn point(&self, value: Option<&Value>) -> Result<Vec<f64>> {
        match value {
            Some(v) => Ok(self.train.schema.row_from_json(v)?),
            None => self.primary.clone().ok_or_else(|| Error::NoPoint(self.id.clone())),
        }
    }

    /// The pipeline for `point`, reused unless `fresh`.
    pub fn fitted(&self, point: &[f64], fresh: bool) -> Result<Arc<Session>> {
        let k = key(point);
        if !fresh {
            if let Some(s) = self.fits.lock().expect("fit cache").get(&k) {
                return Ok(s.clone());
            }
        }
        let session = Arc::new(Session::run(&self.train, point, self.oracle.as_ref(), &self.spec.config)?);
        let mut fits = self.fits.lock().expect("fit cache");
        if fresh {
            fits.insert(k, session.clone());
            Ok(session)
        } else {
            Ok(fits.entry(k).or_insert(session).clone())
        }
    }

    pub fn explain(&self, point: Option<&Value>, fresh: bool) -> Result<Explanation> {
        let p = self.point(point)?;
        Ok(self.fitted(&p, fresh)?.explanation.clone())
    }

    /// Re-routes the overridden point through the fitted tree; no refit.
    pub fn what_if(&self, point: Option<&Value>, overrides: &Map<String, Value>) -> Result<Explanation> {
        let p = self.point(point)?;
        Ok(self.fitted(&p, false)?.what_if(overrides, Some(self.oracle.as_ref()))?)
    }

    pub fn tree(&self) -> Result<TreeView> {
        let p = self.point(None)?;
        Ok(TreeView::of(self.fitted(&p, false)?.as_ref()))
    }

    pub fn snapshot(&self) -> Snapshot {
        let fits = self.fits.lock().expect("fit cache");
        Snapshot { id: self.id.clone(), spec: self.spec.clone(), sessions: fits.values().map(|s| (**s).clone()).collect() }
    }

    /// Rebuilds a session from a snapshot without refitting.
    pub fn restore(snapshot: Snapshot, registry: &OracleRegistry) -> Result<Self> {
        let Snapshot { id, spec, sessions } = snapshot;
        let train = spec.load_train()?;
        let oracle = make_oracle(&spec.oracle_spec, registry, &train.schema)?;
        let primary = spec.point.as_ref().map(|p| train.schema.row_from_json(p)).transpose()?;
        let fits = sessions.into_iter().map(|s| (key(&s.point), Arc::new(s))).collect();
        Ok(LiveSession { id, spec, train, oracle, primary, fits: Mutex::new(fits) })
    }
}

/// On-disk form of a session: the spec plus every fitted pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub spec: SessionSpec,
    pub sessions: Vec<Session>,
}
