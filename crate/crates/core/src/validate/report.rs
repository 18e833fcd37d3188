//! JSON-lines log of validation reports, one record per estimate.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ValidateError, ValidationReport};
use crate::channel::ScenarioClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub id: String,
    pub declared: ScenarioClass,
    #[serde(flatten)]
    pub report: ValidationReport,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ValidateError {
    ValidateError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_report_log(path: &Path, records: &[ValidationRecord]) -> Result<(), ValidateError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| io_err(path, e))?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_report_log(path: &Path) -> Result<Vec<ValidationRecord>, ValidateError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io_err(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
