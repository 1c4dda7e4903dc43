//! CSV outputs: per-run training logs and the aggregated results table.

use std::path::Path;

use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};

use chirl_core::irl::EpochLog;
use chirl_core::metrics::TableRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub context_sweep_loss: f64,
    /// `NaN` on epochs that were not evaluated.
    pub evd: f64,
    pub epoch_seconds: f64,
}

impl From<&EpochLog> for LogRow {
    fn from(l: &EpochLog) -> Self {
        Self {
            epoch: l.epoch,
            context_sweep_loss: l.loss,
            evd: l.evd,
            epoch_seconds: l.epoch_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCsvRow {
    pub env: String,
    pub algorithm: String,
    pub n_traj: usize,
    pub seed_count: usize,
    pub evd_mean: f64,
    pub evd_std: f64,
    pub time_mean_s: f64,
    pub time_std_s: f64,
}

impl From<&TableRow> for TableCsvRow {
    fn from(r: &TableRow) -> Self {
        Self {
            env: r.env.clone(),
            algorithm: r.algorithm.clone(),
            n_traj: r.n_traj,
            seed_count: r.seed_count,
            evd_mean: r.evd_mean,
            evd_std: r.evd_std,
            time_mean_s: r.time_mean_s,
            time_std_s: r.time_std_s,
        }
    }
}

/// Columns holding wall-clock measurements, which differ between reruns.
pub const TIMING_COLUMNS: [&str; 3] = ["epoch_seconds", "time_mean_s", "time_std_s"];

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_log(path: &Path, logs: &[EpochLog]) -> Result<()> {
    write_rows(path, logs.iter().map(LogRow::from))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    read_rows(path)
}

pub fn write_table(path: &Path, rows: &[TableRow]) -> Result<()> {
    write_rows(path, rows.iter().map(TableCsvRow::from))
}

pub fn read_table(path: &Path) -> Result<Vec<TableCsvRow>> {
    read_rows(path)
}

/// CSV body with the named columns blanked, for comparing reruns.
pub fn mask_columns(csv_text: &str, columns: &[&str]) -> Result<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = r.headers()?.clone();
    let masked: Vec<bool> = headers.iter().map(|h| columns.contains(&h)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&headers)?;
    for record in r.records() {
        let record = record?;
        let fields: Vec<&str> = record.iter().zip(&masked).map(|(f, &m)| if m { "" } else { f }).collect();
        w.write_record(&fields)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
