//! Line-delimited result records.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use tns_core::experiments::{ObservableEstimate, RunRecord};
use tns_core::stats::extended_float;

use crate::error::CliError;

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// One experiment outcome per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultLine {
    pub schema_version: u32,
    pub config_hash: String,
    pub observable: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(with = "extended_float")]
    pub estimate: f64,
    #[serde(with = "extended_float")]
    pub std_error: f64,
    pub n_samples: u64,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ResultLine {
    pub fn new(config_hash: &str, observable: impl Into<String>, estimate: f64, std_error: f64, n_samples: u64, wall_ms: u64) -> Self {
        Self {
            schema_version: RESULT_SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            observable: observable.into(),
            params: BTreeMap::new(),
            estimate,
            std_error,
            n_samples,
            wall_ms,
            flags: Vec::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn from_estimate(config_hash: &str, e: &ObservableEstimate, wall_ms: u64) -> Self {
        Self {
            schema_version: RESULT_SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            observable: e.observable.clone(),
            params: e.params.clone(),
            estimate: e.estimate,
            std_error: e.std_error,
            n_samples: e.n_samples,
            wall_ms,
            flags: e.flags.clone(),
        }
    }
}

pub fn lines_from_record(config_hash: &str, record: &RunRecord) -> Vec<ResultLine> {
    record
        .estimates
        .iter()
        .map(|e| ResultLine::from_estimate(config_hash, e, record.wall_ms))
        .collect()
}

/// Appends records to `path`, or writes them to stdout when `path` is `None`.
pub fn write_lines(path: Option<&Path>, lines: &[ResultLine]) -> Result<(), CliError> {
    let mut sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for line in lines {
        serde_json::to_writer(&mut sink, line).map_err(|e| CliError::Io(e.to_string()))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Parses line-delimited records. An unparseable final line without a
/// terminating newline is treated as an interrupted write and skipped with
/// a warning; any other malformed line is an error.
pub fn parse_lines(text: &str, origin: &str) -> Result<Vec<ResultLine>, CliError> {
    let complete = text.ends_with('\n');
    let raw: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(raw.len());
    for (i, line) in raw.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultLine>(line) {
            Ok(r) => {
                if r.schema_version != RESULT_SCHEMA_VERSION {
                    return Err(CliError::Validation(format!(
                        "{origin}:{}: schema version {} is not {RESULT_SCHEMA_VERSION}",
                        i + 1,
                        r.schema_version
                    )));
                }
                out.push(r)
            }
            Err(e) if i + 1 == raw.len() && !complete => {
                log::warn!("{origin}:{}: skipping truncated final line ({e})", i + 1);
            }
            Err(e) => return Err(CliError::Validation(format!("{origin}:{}: {e}", i + 1))),
        }
    }
    Ok(out)
}

pub fn read_lines(path: &Path) -> Result<Vec<ResultLine>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_lines(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultLine {
        ResultLine::new("abc", "tail_probability", 0.125, 0.01, 1000, 12)
            .with_param("epsilon", 0.1)
            .with_param("R", 1.5)
    }

    #[test]
    fn round_trip_is_exact() {
        let mut r = sample();
        r.estimate = 0.1 + 0.2;
        r.std_error = f64::INFINITY;
        let text = serde_json::to_string(&r).unwrap() + "\n";
        let back = parse_lines(&text, "t").unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn truncated_tail_is_skipped() {
        let full = serde_json::to_string(&sample()).unwrap();
        let text = format!("{full}\n{full}\n{}", &full[..full.len() / 2]);
        assert_eq!(parse_lines(&text, "t").unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let full = serde_json::to_string(&sample()).unwrap();
        let text = format!("{full}\n{{oops\n{full}\n");
        let err = parse_lines(&text, "t").unwrap_err().to_string();
        assert!(err.starts_with("t:2:"), "{err}");
    }

    #[test]
    fn append_keeps_earlier_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        write_lines(Some(&p), &[sample()]).unwrap();
        write_lines(Some(&p), &[sample(), sample()]).unwrap();
        assert_eq!(read_lines(&p).unwrap().len(), 3);
    }
}
