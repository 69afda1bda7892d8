//! Append-only JSON-lines store of configuration feedback.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use optislot_core::cmis::{aggregate, Measurement, Origin};
use optislot_core::{FrequencySlot, SimTime, SlotStatistics};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("feedback db write failed ({path}): {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("feedback db read failed ({path}): {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbRecord {
    pub ts: String,
    pub whitebox: String,
    pub port: String,
    pub slot: FrequencySlot,
    pub freq_ghz: u32,
    pub config_time_s: f64,
    pub episode: u64,
    pub request_id: u64,
}

/// Wall-clock rendering of a simulated instant (time zero is 2023-06-20 00:00).
pub fn timestamp(t: SimTime) -> String {
    let epoch: NaiveDateTime = NaiveDate::from_ymd_opt(2023, 6, 20).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let at = epoch + TimeDelta::microseconds(t.as_micros() as i64);
    at.format("%Y-%m-%dT%H:%M:%S%.6f").to_string()
}

pub struct FeedbackDb {
    path: PathBuf,
    file: File,
}

impl FeedbackDb {
    /// Open for appending, creating the file and its directory if needed.
    pub fn open(path: &Path) -> Result<Self, DbError> {
        let werr = |source| DbError::Write { path: path.to_path_buf(), source };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(werr)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(werr)?;
        Ok(FeedbackDb { path: path.to_path_buf(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &DbRecord) -> Result<(), DbError> {
        let mut line = serde_json::to_string(record).expect("record serialises");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|source| DbError::Write { path: self.path.clone(), source })
    }
}

pub fn load(path: &Path) -> Result<Vec<DbRecord>, DbError> {
    let file = File::open(path).map_err(|source| DbError::Read { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DbError::Read { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DbRecord = serde_json::from_str(&line).map_err(|e| DbError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Per-slot statistics over the stored records.
pub fn slot_statistics(records: &[DbRecord]) -> Vec<SlotStatistics> {
    let ms: Vec<Measurement> = records
        .iter()
        .map(|r| Measurement {
            port: format!("{}/{}", r.whitebox, r.port),
            slot: r.slot,
            config_time_s: r.config_time_s,
            origin: Origin::Real,
        })
        .collect();
    aggregate(&ms)
}
