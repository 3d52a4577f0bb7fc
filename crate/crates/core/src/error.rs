use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {what} undefined at r = {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index ({t_idx}, {tau_idx}) outside the solution triangle of size {n_steps}")]
    OutOfTriangle {
        t_idx: usize,
        tau_idx: usize,
        n_steps: usize,
    },

    #[error("non-finite generator value at t_idx = {t_idx}, tau_idx = {tau_idx}, path = {path}")]
    NonFiniteGenerator {
        t_idx: usize,
        tau_idx: usize,
        path: usize,
    },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
