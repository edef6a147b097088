//! Error type shared across the model crates.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid timestamp {0}")]
    InvalidTimestamp(String),

    #[error("step is {got} min, expected 30 (resample first)")]
    StepNotHalfHourly { got: i64 },

    #[error("step is {got} min, not a multiple of 30")]
    StepNotResamplable { got: i64 },

    #[error("trace '{id}': {reason}")]
    TraceMismatch { id: String, reason: String },

    #[error("no traces")]
    NoTraces,

    #[error("trace '{id}' not found in trace set")]
    UnknownTrace { id: String },

    #[error("profile '{id}' not found")]
    UnknownProfile { id: String },

    #[error("profile '{id}': {reason}")]
    BadProfile { id: String, reason: String },

    #[error("horizon mismatch for {what}: expected {expected} intervals, got {got}")]
    HorizonMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("capacity factor must be positive")]
    ZeroCapacityFactor,

    #[error("no energy delivered over the accounting horizon")]
    ZeroDeliveredEnergy,

    #[error("scenario is invalid: {0}")]
    InvalidScenario(String),

    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),

    #[error("invalid optimizer configuration: {0}")]
    InvalidOptimizerConfig(String),
}
