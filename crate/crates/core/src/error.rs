use thiserror::Error;

/// Errors raised by the simulator and its analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("config invariant `{invariant}` violated: {detail}")]
    Invariant {
        invariant: &'static str,
        detail: String,
    },

    #[error("support clipped: {0}")]
    SupportClipped(String),

    #[error("non-finite amplitude at z = {z} (step {step})")]
    NonFinite { z: f64, step: usize },

    #[error("norm drift {drift:e} exceeds tolerance {tolerance:e} at z = {z}")]
    ConservationBreach { z: f64, drift: f64, tolerance: f64 },

    #[error("unknown preset `{0}` (expected one of S1, S2, S3, S4)")]
    UnknownPreset(String),

    #[error("zero norm: {0}")]
    ZeroNorm(&'static str),

    #[error("no bracket found: {0}")]
    NoBracket(String),

    #[error("grid file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            invariant,
            detail: detail.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
