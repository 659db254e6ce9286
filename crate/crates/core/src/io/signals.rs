//! Signals as CSV (one signal per row) with a sibling JSON metadata file.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalMetadata {
    pub n: usize,
    pub count: usize,
    pub dataset_id: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    /// Free-form generator details (RNG family, wavelet parameters, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

/// `signals.csv` → `signals.json`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes rows with Rust's shortest round-trip float formatting, so a
/// read-back is exact and the bytes are reproducible.
pub fn write_signals(
    csv_path: impl AsRef<Path>,
    signals: &DMatrix<f64>,
    meta: &SignalMetadata,
) -> Result<()> {
    let csv_path = csv_path.as_ref();
    if meta.n != signals.ncols() || meta.count != signals.nrows() {
        return Err(Error::InvalidArgument(format!(
            "metadata says {}×{}, signals are {}×{}",
            meta.count,
            meta.n,
            signals.nrows(),
            signals.ncols()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(csv_path)?;
    for j in 0..signals.nrows() {
        w.write_record(signals.row(j).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    std::fs::write(
        metadata_path(csv_path),
        serde_json::to_string_pretty(meta)? + "\n",
    )?;
    Ok(())
}

pub fn read_signals(csv_path: impl AsRef<Path>) -> Result<(DMatrix<f64>, SignalMetadata)> {
    let csv_path = csv_path.as_ref();
    let meta: SignalMetadata = serde_json::from_slice(&std::fs::read(metadata_path(csv_path))?)?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(csv_path)?;
    let mut values = Vec::with_capacity(meta.n * meta.count);
    let mut rows = 0;
    for record in r.records() {
        let record = record?;
        if record.len() != meta.n {
            return Err(Error::Format(format!(
                "row {rows} has {} values, expected {}",
                record.len(),
                meta.n
            )));
        }
        for field in record.iter() {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {rows}: {e}")))?,
            );
        }
        rows += 1;
    }
    if rows != meta.count {
        return Err(Error::Format(format!(
            "found {rows} rows, metadata says {}",
            meta.count
        )));
    }
    Ok((DMatrix::from_row_slice(rows, meta.n, &values), meta))
}

/// One line of a training loss history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub train_risk: f64,
    pub reg_term: f64,
}

pub fn write_loss_history(path: impl AsRef<Path>, history: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_history(path: impl AsRef<Path>) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|rec| rec.map_err(Error::from))
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
