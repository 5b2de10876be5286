//! The explanation pipeline: oracle access, neighborhood generation,
//! surrogate fitting and explanation assembly.

mod encoder;
mod explanation;
pub mod metrics;
mod neighborhood;
mod oracle;
mod session;

pub use encoder::SurrogateEncoder;
pub use explanation::{
    apply_overrides, explain_point, render_text, top_attributions, Attribution, Explanation, OracleView, PointCell,
    RankedAttribution, Surrogate, DEFAULT_TOP_N,
};
pub use neighborhood::{generate_neighborhood, LabelMode, Neighborhood, Provenance, SessionConfig, DEFAULT_K, DEFAULT_N_SYNTHETIC};
pub use oracle::{
    make_oracle, FnOracle, HttpOracle, Oracle, OracleRegistry, OracleSpec, Predictions, SubprocessOracle, PROTOCOL,
};
pub use session::Session;

#[cfg(test)]
mod tests;
