//! Evaluation harness for local explanations: reference target models, a
//! uniform perturbation baseline, fidelity and rule-quality metrics, and the
//! experiment designs that compare them on bundled datasets.

pub mod cart;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod forest;
pub mod linear;
pub mod metrics;
pub mod urs;

pub use error::{Error, Result};
pub use experiment::{run_experiment, Design, ExperimentConfig, MetricReport};
pub use forest::{fit_reference_forest, register_models, registry, ForestConfig, ReferenceForest};
