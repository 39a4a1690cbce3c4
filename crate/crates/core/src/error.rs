use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unit {unit} has no neighbors; neighborhood averages are undefined")]
    IsolatedUnit { unit: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("dataset has no column `{0}`")]
    MissingColumn(String),

    #[error("design matrix is rank deficient at column `{column}`")]
    Collinear { column: String },

    #[error("insufficient data: {n} observations for {k} columns")]
    InsufficientData { n: usize, k: usize },

    #[error("invalid sampler state: {0}")]
    InvalidState(String),

    #[error("chain for `{0}` has zero within-chain variance")]
    DegenerateChain(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
