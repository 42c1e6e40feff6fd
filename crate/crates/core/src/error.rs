//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoadError {
    #[error("slot {t} out of range 1..={horizon}")]
    SlotOutOfRange { t: usize, horizon: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("vector is not in K: {0}")]
    NotInK(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("size guard: {0}")]
    TooLarge(String),
    #[error("trace error: {0}")]
    Trace(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, SoadError>;

impl From<std::io::Error> for SoadError {
    fn from(e: std::io::Error) -> Self {
        SoadError::Io(e.to_string())
    }
}

impl From<csv::Error> for SoadError {
    fn from(e: csv::Error) -> Self {
        SoadError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SoadError {
    fn from(e: serde_json::Error) -> Self {
        SoadError::Io(e.to_string())
    }
}
