//! Output locations, run manifests and CSV writing.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPINWAVE_OUT_DIR";

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("spinwave-out"))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

/// Writes a CSV file; headers carry units in parentheses.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
    w.write_record(header)
        .map_err(|e| CliError::write(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// Number formatting for CSV cells; non-finite values become empty cells.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
}

pub struct ManifestBuilder {
    started: DateTime<Utc>,
}

impl ManifestBuilder {
    pub fn start() -> Self {
        Self {
            started: Utc::now(),
        }
    }

    pub fn finish(
        self,
        config_hash: String,
        seed: Option<u64>,
        outputs: &[PathBuf],
    ) -> RunManifest {
        let stamp = |t: DateTime<Utc>| t.to_rfc3339_opts(SecondsFormat::Millis, true);
        RunManifest {
            command_line: std::env::args().collect(),
            schema_version: spinwave::eventlog::SCHEMA_VERSION,
            config_hash,
            seed,
            started_at: stamp(self.started),
            finished_at: stamp(Utc::now()),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        }
    }
}
