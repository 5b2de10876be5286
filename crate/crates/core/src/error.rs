use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: usize, expected: usize, found: usize },
    #[error("line {line}, column `{column}`: cannot parse `{token}` as a number")]
    UnparseableNumber { line: usize, column: String, token: String },
    #[error("line {line}, column `{column}`: unknown category `{token}`")]
    UnknownCategory { line: usize, column: String, token: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("column `{0}` is constant; min-max scaling is undefined")]
    DegenerateColumn(String),
    #[error("column `{column}`: category index {index} out of range (width {width})")]
    CategoryOutOfRange { column: String, index: usize, width: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training diverged at epoch {epoch}, step {step}: critic loss {critic_loss}, generator loss {generator_loss}")]
    NonFiniteLoss { epoch: usize, step: usize, critic_loss: f64, generator_loss: f64 },
    #[error("model file corrupt: {0}")]
    CorruptModel(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
