//! CSV form of a run trace. Absent optional columns are empty fields.

use std::path::Path;

use conserv_core::monitor::{RunTrace, TraceRecord};

use crate::{CliError, Result};

pub const HEADER: [&str; 5] = ["iter", "normalized_iter", "self_residual", "oracle_residual", "objective"];

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_owned(),
        source,
    }
}

/// Writes the header even for an empty trace.
pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    w.write_record(HEADER).map_err(csv_err(path))?;
    for r in &trace.records {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_trace(path: &Path) -> Result<RunTrace> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?;
    if header.iter().ne(HEADER) {
        return Err(CliError::Config(format!("{}: unexpected trace header", path.display())));
    }
    let records = r
        .deserialize::<TraceRecord>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err(path))?;
    Ok(RunTrace { records })
}
