use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solvers, samplers, checks and data pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (is lambda <= 0 or the Gram matrix corrupted?)")]
    NotPositiveDefinite,

    #[error("matrix has rank 0; leverage scores are undefined")]
    ZeroRank,

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("malformed sampling plan: {0}")]
    MalformedPlan(String),

    #[error("degenerate sampling weights at iteration {iteration}: pilot coefficients are all zero")]
    DegenerateWeights { iteration: usize },

    #[error("{path}: row {row}, column {col}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error("digest mismatch for {path}: manifest has {expected}, file hashes to {actual}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
