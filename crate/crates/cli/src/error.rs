use std::fmt;
use std::path::Path;

use crate::config::ConfigError;

/// Process exit codes.
pub mod code {
    pub const FAILURE: u8 = 1;
    /// Unreadable input, bad config syntax, unknown target.
    pub const USAGE: u8 = 2;
    /// Invalid physics parameters or not enough data.
    pub const INVALID: u8 = 3;
    /// Corrupt or unsupported event log.
    pub const CORRUPT: u8 = 4;
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn read(path: &Path, err: std::io::Error) -> Self {
        Self::new(
            code::USAGE,
            format!("cannot read {}: {err}", path.display()),
        )
    }

    pub fn write(path: &Path, err: impl fmt::Display) -> Self {
        Self::new(
            code::FAILURE,
            format!("cannot write {}: {err}", path.display()),
        )
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Syntax { .. } => code::USAGE,
            ConfigError::Invalid { .. } => code::INVALID,
        };
        Self::new(code, e.to_string())
    }
}

impl From<spinwave::Error> for CliError {
    fn from(e: spinwave::Error) -> Self {
        use spinwave::Error as E;
        let code = match e {
            E::InvalidParameter { .. }
            | E::InvalidState(_)
            | E::Domain(_)
            | E::InsufficientData(_) => code::INVALID,
            E::UnplannedEvent { .. } | E::CorruptLog { .. } | E::UnsupportedSchema { .. } => {
                code::CORRUPT
            }
            E::Io(_) => code::FAILURE,
        };
        Self::new(code, e.to_string())
    }
}
