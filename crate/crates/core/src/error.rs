use thiserror::Error;

/// Errors raised by model validation, the numerical solvers and the simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrwError {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A solver or simulator was configured inconsistently (horizon too small,
    /// mismatched decay constant, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The operation requires a different criticality mode.
    #[error("mode error: {0}")]
    Mode(String),

    /// An iterative method ran out of budget.
    #[error("no convergence after {iterations} iterations (last gap {last_gap:e}): {what}")]
    NonConvergence {
        what: String,
        iterations: usize,
        last_gap: f64,
    },

    /// A model failed validation; every violated invariant is listed.
    #[error("invalid model: {}", .0.join("; "))]
    Invalid(Vec<String>),

    /// A model file could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A post-condition of a solver was violated.
    #[error("solver fault: {0}")]
    SolverFault(String),
}

pub type Result<T> = std::result::Result<T, BrwError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(BrwError::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(BrwError::Config(msg.into()))
}
