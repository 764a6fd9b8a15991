use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by graph construction, posterior solvers, acquisition and
/// the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} has {size} nodes, exceeding the dense limit of {cap}")]
    ResourceLimit {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error(
        "connected component of {size} node(s) containing node {representative} has no labeled node"
    )]
    ComponentWithoutLabel { representative: usize, size: usize },

    #[error("Newton solver did not converge in {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("invalid query for node {index}: {reason}")]
    InvalidQuery { index: usize, reason: String },

    #[error("no unlabeled candidates remain")]
    EmptyPool,

    #[error("{path}: malformed data at byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("trial {trial} failed at step {step} ({method}): {source}")]
    Trial {
        trial: usize,
        step: usize,
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
