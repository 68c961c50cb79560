//! Comma-separated tables for plotting, and shard merging.
//!
//! Column schemas (stable):
//! - `tails`: `epsilon,R,p_hat,err`, one row per `tail_probability` record;
//! - any other observable name: `epsilon,observable,estimate,err`, where
//!   `epsilon` is empty for records without one.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::results::{read_lines, write_lines, ResultLine};

pub const TAILS_HEADER: [&str; 4] = ["epsilon", "R", "p_hat", "err"];
pub const OBSERVABLE_HEADER: [&str; 4] = ["epsilon", "observable", "estimate", "err"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TableKind {
    Tails,
    Observable(String),
}

impl TableKind {
    pub fn parse(s: &str) -> Self {
        match s {
            "tails" => TableKind::Tails,
            other => TableKind::Observable(other.to_string()),
        }
    }

    fn observable(&self) -> &str {
        match self {
            TableKind::Tails => "tail_probability",
            TableKind::Observable(name) => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub epsilon: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub p_hat: f64,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableRow {
    pub epsilon: Option<f64>,
    pub observable: String,
    pub estimate: f64,
    pub err: f64,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(format!("csv: {e}"))
}

/// Writes the table for `kind` and returns the number of data rows. An
/// empty input yields a header-only table; a non-empty input without the
/// requested observable is an error that lists the available ones.
pub fn export_table<W: Write>(lines: &[ResultLine], kind: &TableKind, out: W) -> Result<usize, CliError> {
    let wanted = kind.observable();
    let rows: Vec<&ResultLine> = lines.iter().filter(|l| l.observable == wanted).collect();
    if rows.is_empty() && !lines.is_empty() {
        let available: BTreeSet<&str> = lines.iter().map(|l| l.observable.as_str()).collect();
        return Err(CliError::Validation(format!(
            "no `{wanted}` records; available observables: {}",
            available.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    match kind {
        TableKind::Tails => {
            w.write_record(TAILS_HEADER).map_err(csv_err)?;
            for l in &rows {
                let get = |k: &str| {
                    l.params
                        .get(k)
                        .copied()
                        .ok_or_else(|| CliError::Validation(format!("tail record without `{k}` parameter")))
                };
                w.serialize(TailRow {
                    epsilon: get("epsilon")?,
                    r: get("R")?,
                    p_hat: l.estimate,
                    err: l.std_error,
                })
                .map_err(csv_err)?;
            }
        }
        TableKind::Observable(_) => {
            w.write_record(OBSERVABLE_HEADER).map_err(csv_err)?;
            for l in &rows {
                w.serialize(ObservableRow {
                    epsilon: l.params.get("epsilon").copied(),
                    observable: l.observable.clone(),
                    estimate: l.estimate,
                    err: l.std_error,
                })
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(rows.len())
}

pub fn import_tails<R: Read>(input: R) -> Result<Vec<TailRow>, CliError> {
    csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

pub fn import_observables<R: Read>(input: R) -> Result<Vec<ObservableRow>, CliError> {
    csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

/// Concatenates shard files into `out` (replacing it), dropping truncated
/// final lines of each shard. Returns the number of records written.
pub fn merge(inputs: &[PathBuf], out: &Path) -> Result<usize, CliError> {
    let mut all = Vec::new();
    for p in inputs {
        all.extend(read_lines(p)?);
    }
    if out.exists() {
        std::fs::remove_file(out)?;
    }
    write_lines(Some(out), &all)?;
    Ok(all.len())
}
