//! JSON-lines event log: one header object, then one event per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::montecarlo::{ExperimentConfig, TrialEvent};

pub const SCHEMA: &str = "spinwave-events";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub schema: String,
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
}

impl LogHeader {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Self {
        Self {
            schema: SCHEMA.into(),
            schema_version: SCHEMA_VERSION,
            seed,
            config_hash: config.hash(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub events: Vec<TrialEvent>,
}

pub fn write_log<W: Write>(mut out: W, header: &LogHeader, events: &[TrialEvent]) -> Result<()> {
    let io = |e: serde_json::Error| Error::Io(e.into());
    serde_json::to_writer(&mut out, header).map_err(io)?;
    out.write_all(b"\n")?;
    for event in events {
        serde_json::to_writer(&mut out, event).map_err(io)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Hex SHA-256 of raw bytes, e.g. a whole log file.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

fn corrupt(line: usize, reason: impl std::fmt::Display) -> Error {
    Error::CorruptLog {
        line,
        reason: reason.to_string(),
    }
}

/// Parses a log, failing on the first malformed line (1-based numbering).
pub fn read_log<R: BufRead>(input: R) -> Result<EventLog> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| corrupt(1, "empty log, missing header"))??;
    let raw: Value = serde_json::from_str(&first).map_err(|e| corrupt(1, e))?;
    let schema = raw.get("schema").and_then(Value::as_str).unwrap_or("");
    let version = raw
        .get("schema_version")
        .and_then(Value::as_u64)
        .unwrap_or(0);
    if schema != SCHEMA || version != u64::from(SCHEMA_VERSION) {
        return Err(Error::UnsupportedSchema {
            schema: schema.to_string(),
            version: u32::try_from(version).unwrap_or(u32::MAX),
        });
    }
    let header: LogHeader = serde_json::from_value(raw).map_err(|e| corrupt(1, e))?;
    if header.config.hash() != header.config_hash {
        return Err(corrupt(1, "config_hash does not match the embedded config"));
    }

    let mut events = Vec::new();
    let mut pending_blank = None;
    for (i, line) in lines.enumerate() {
        let number = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            pending_blank.get_or_insert(number);
            continue;
        }
        if let Some(blank) = pending_blank {
            return Err(corrupt(blank, "blank line inside the event stream"));
        }
        let event: TrialEvent = serde_json::from_str(&line).map_err(|e| corrupt(number, e))?;
        events.push(event);
    }
    Ok(EventLog { header, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::run_trials;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            trials_per_point: 2000,
            ..ExperimentConfig::default()
        }
    }

    fn encoded(config: &ExperimentConfig) -> (Vec<TrialEvent>, String) {
        let events = run_trials(config, 7).unwrap();
        let mut buf = Vec::new();
        write_log(&mut buf, &LogHeader::new(config, 7), &events).unwrap();
        (events, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn round_trip() {
        let config = small();
        let (events, text) = encoded(&config);
        assert!(!events.is_empty());
        let log = read_log(text.as_bytes()).unwrap();
        assert_eq!(log.events, events);
        assert_eq!(log.header.config, config);
        assert_eq!(log.header.seed, 7);
        assert!(text.lines().skip(1).any(|l| l.contains("\"\u{2212}\"")));
    }

    #[test]
    fn reports_first_bad_line() {
        let (_, text) = encoded(&small());
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "{\"trial_id\": \"x\"}";
        lines[5] = "garbage";
        let err = read_log(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::CorruptLog { line: 4, .. }), "{err}");
    }

    #[test]
    fn rejects_unknown_schema() {
        let (_, text) = encoded(&small());
        let bumped = text.replacen("\"schema_version\":1", "\"schema_version\":2", 1);
        assert!(matches!(
            read_log(bumped.as_bytes()),
            Err(Error::UnsupportedSchema { version: 2, .. })
        ));
        let renamed = text.replacen(SCHEMA, "other", 1);
        assert!(matches!(
            read_log(renamed.as_bytes()),
            Err(Error::UnsupportedSchema { .. })
        ));
        assert!(matches!(
            read_log("".as_bytes()),
            Err(Error::CorruptLog { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_tampered_config() {
        let (_, text) = encoded(&small());
        let tampered = text.replacen("\"trials_per_point\":2000", "\"trials_per_point\":2001", 1);
        assert!(matches!(
            read_log(tampered.as_bytes()),
            Err(Error::CorruptLog { line: 1, .. })
        ));
    }

    #[test]
    fn trailing_newlines_are_fine() {
        let (events, mut text) = encoded(&small());
        text.push_str("\n\n");
        assert_eq!(
            read_log(text.as_bytes()).unwrap().events.len(),
            events.len()
        );
    }
}
