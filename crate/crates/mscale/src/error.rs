//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Vector/operator dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A NaN or infinity appeared where a finite scalar is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An iterative routine exhausted its budget without converging.
    #[error("failed to converge: {0}")]
    NoConvergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
