use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{name} must be symmetric positive definite")]
    NotPositiveDefinite { name: &'static str },

    #[error("DARE did not converge after {iterations} iterations (last residual {residual:.3e}); the pair (A, B) may not be stabilizable")]
    DareNotConverged { residual: f64, iterations: usize },

    #[error("closed loop marginally stable: sensitivity system is numerically singular (condition estimate {condition:.3e})")]
    MarginallyStable { condition: f64 },

    #[error("DARE failed at parameter estimate {theta:?}: {source}")]
    DareAtEstimate {
        theta: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("DARE failed at grid point {theta:?} (near-unstabilizable region): {source}")]
    GridPointFailure {
        theta: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("DARE failed at simulation step {step}: {source}")]
    DareAtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory log is missing {what}, required by this diagnostic")]
    MissingLogData { what: &'static str },

    #[error("diagnostic requires {requirement}, but the log was produced with {actual}")]
    NonconformingRun {
        requirement: &'static str,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_error(context: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
