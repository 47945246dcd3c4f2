use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: total spin number must be at least 1 (got {0})")]
    InvalidDimension(i64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("covariance of the {kernel} kernel is not positive semidefinite (jitter up to {jitter:e} of the max diagonal did not help)")]
    KernelNotPositive { kernel: &'static str, jitter: f64 },

    #[error("numerical divergence at t = {time}")]
    Divergence { time: f64 },

    #[error("dagger of O-bar operator {which} does not match its conjugate transpose (max deviation {deviation:e})")]
    DaggerMismatch { which: u8, deviation: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
