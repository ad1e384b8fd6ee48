use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for {len} constants")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unknown kernel `{0}` (expected one of add, sub, mul, div, log, sin)")]
    UnknownKernel(String),

    #[error("kernel `{0}` listed more than once")]
    DuplicateKernel(String),

    #[error("binary kernel `{0}` requires two operands")]
    MissingOperand(&'static str),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid genotype: {0}")]
    InvalidGenotype(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot use value `{value}`")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column `{0}` has zero variance and cannot be scaled")]
    ZeroVariance(String),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
