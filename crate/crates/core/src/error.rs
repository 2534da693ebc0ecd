use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("outside ultimate fault tolerance: need 1/a > 1/h + delta, got 1/a = {inv_a} and 1/h + delta = {bound}")]
    OutOfTolerance { inv_a: f64, bound: f64 },

    #[error("inadmissible action {action} in state {state}: {reason}")]
    Inadmissible {
        state: String,
        action: String,
        reason: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
