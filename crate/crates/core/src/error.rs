use thiserror::Error;

/// Errors raised by the plate, flow and solver modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("delay history too short: need {needed} slots, have {available}")]
    HistoryTooShort { needed: usize, available: usize },

    #[error("history slot spacing mismatch: expected dt = {expected}, got {got}")]
    HistorySpacing { expected: f64, got: f64 },

    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },

    #[error("newton iteration failed after {iterations} iterations (residual {residual:e}): {reason}")]
    NewtonFailure {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("equilibrium set is empty")]
    EmptySet,

    #[error("decay fit: {0}")]
    DecayFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
