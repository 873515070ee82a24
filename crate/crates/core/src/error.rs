use thiserror::Error;

/// Errors raised by samplers, estimators and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("resource limit: {required} cells requested, budget is {budget}")]
    Resource { required: u128, budget: u128 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("circulant embedding has a negative eigenvalue {eigenvalue:e} (largest {largest:e})")]
    Embedding { eigenvalue: f64, largest: f64 },

    #[error("calibration objective increased from {before} to {after}")]
    Convergence { before: f64, after: f64 },

    #[error("range error: {0}")]
    Range(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
