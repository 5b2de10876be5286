use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lmte_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),
    #[error("unknown dataset `{0}` (bundled: {1})")]
    UnknownDataset(String, String),
    #[error("unknown design `{0}` (known: fig3, table2, table3, table4, table5, table6)")]
    UnknownDesign(String),
    #[error("experiment has no test points")]
    EmptyReport,
    #[error("configuration error: {0}")]
    Config(String),
}

impl From<Error> for lmte_core::Error {
    fn from(e: Error) -> Self {
        match e {
            Error::Core(e) => e,
            other => lmte_core::Error::Oracle(other.to_string()),
        }
    }
}
