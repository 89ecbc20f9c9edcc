use thiserror::Error;

/// Errors raised by the solver, the experiments and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The L-infinity monitor saw a value above `bound * (1 + slack)`.
    #[error("L-infinity bound violated at t = {t}, x = {x}: |u| = {value} > {bound}")]
    BoundViolation { t: f64, x: f64, value: f64, bound: f64 },

    #[error("division unstable: |r*beta| below floor at cells {cells:?}")]
    DivisionUnstable { cells: Vec<usize> },

    #[error("regularization did not converge: cauchy gaps {gaps:?}")]
    NoConvergence { gaps: Vec<f64> },

    #[error("optimizer stalled after {} iterations (objective history {objective:?})", objective.len())]
    OptimizerStall { objective: Vec<f64> },

    #[error("validation failed for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        message: message.into(),
    }
}
