//! A fitted explanation session: neighborhood, surrogate and explanation.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::encoder::SurrogateEncoder;
use super::explanation::{Explanation, Surrogate};
use super::neighborhood::{generate_neighborhood, Neighborhood, SessionConfig};
use super::oracle::Oracle;
use crate::error::Result;
use crate::tabular::{Dataset, Schema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub config: SessionConfig,
    pub point: Vec<f64>,
    pub neighborhood: Neighborhood,
    pub surrogate: Surrogate,
    pub explanation: Explanation,
}

impl Session {
    /// Runs the whole pipeline for `x_t`. The surrogate encoder is fitted on
    /// `train`.
    pub fn run(train: &Dataset, x_t: &[f64], oracle: &dyn Oracle, config: &SessionConfig) -> Result<Self> {
        let neighborhood = generate_neighborhood(train, x_t, oracle, config)?;
        let encoder = SurrogateEncoder::fit(train)?;
        Self::from_neighborhood(x_t, neighborhood, &encoder, oracle, config)
    }

    pub fn from_neighborhood(
        x_t: &[f64],
        neighborhood: Neighborhood,
        encoder: &SurrogateEncoder,
        oracle: &dyn Oracle,
        config: &SessionConfig,
    ) -> Result<Self> {
        let lmt = config.lmt_for(neighborhood.task);
        let surrogate = Surrogate::fit(&neighborhood, encoder, &lmt, config.label_mode)?;
        let explanation = surrogate.explain(x_t, Some(oracle))?;
        Ok(Session { config: config.clone(), point: x_t.to_vec(), neighborhood, surrogate, explanation })
    }

    pub fn schema(&self) -> &Schema {
        self.surrogate.schema()
    }

    pub fn what_if(&self, overrides: &Map<String, Value>, oracle: Option<&dyn Oracle>) -> Result<Explanation> {
        self.surrogate.what_if(&self.point, overrides, oracle)
    }
}
