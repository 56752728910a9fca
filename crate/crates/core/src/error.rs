use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the samplers, operators and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}:{line}: vertex index {index} out of range for n = {n}")]
    IndexOutOfRange { path: PathBuf, line: usize, index: usize, n: usize },

    /// The norm estimator ran out of iterations. `lower_bound` is still a
    /// valid lower bound on the operator norm.
    #[error("no convergence after {iterations} iterations (norm >= {lower_bound})")]
    ConvergenceFailure { iterations: usize, lower_bound: f64 },

    #[error("integration failed at t = {t}: step size underflow after {halvings} halvings")]
    IntegrationFailure { t: f64, halvings: u32 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy { kind: &'static str, name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, actual })
    }
}
