use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid two-qubit state: {0}")]
    InvalidState(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(
        "event for storage time {storage_time} µs and settings {settings} is not in the run plan"
    )]
    UnplannedEvent { storage_time: f64, settings: String },

    #[error("event log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },

    #[error("unsupported event log schema `{schema}` version {version}")]
    UnsupportedSchema { schema: String, version: u32 },

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
}

/// Rejects NaN and infinities.
pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::param(name, format!("must be finite, got {value}")))
    }
}

/// Accepts values in the closed unit interval.
pub(crate) fn probability(name: &'static str, value: f64) -> Result<f64> {
    finite(name, value)?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::param(
            name,
            format!("must lie in [0, 1], got {value}"),
        ))
    }
}
