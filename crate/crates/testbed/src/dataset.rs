//! Dataset files: measurement and statistics CSVs, fit documents.

use std::path::Path;

use optislot_core::cmis::{self, CmisError, Measurement, Origin};
use optislot_core::laser::FitDocument;
use optislot_core::SlotStatistics;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Cmis(#[from] CmisError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> DatasetError + '_ {
    move |e| DatasetError::Format { path: path.display().to_string(), message: e.to_string() }
}

/// Result of running a syslog file through parse, pairing, augmentation and fitting.
#[derive(Debug, Clone)]
pub struct LogDataset {
    pub measurements: Vec<Measurement>,
    pub unmatched_reinits: usize,
    pub stats: Vec<SlotStatistics>,
    pub fit: FitDocument,
}

pub fn process_log(text: &str, copies: usize, noise_fraction: f64, seed: u64) -> Result<LogDataset, CmisError> {
    let events = cmis::parse_log(text)?;
    let pairing = cmis::pair_events(&events)?;
    let measurements = if copies > 0 {
        cmis::augment(&pairing.measurements, copies, noise_fraction, seed)
    } else {
        pairing.measurements
    };
    let stats = cmis::aggregate(&measurements);
    let fit = FitDocument::from_stats(&stats)?;
    Ok(LogDataset { measurements, unmatched_reinits: pairing.unmatched_reinits, stats, fit })
}

pub fn write_measurements_csv(path: &Path, measurements: &[Measurement]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["port", "slot", "frequency_ghz", "config_time_s", "origin"]).map_err(csv_err(path))?;
    for m in measurements {
        let origin = match m.origin {
            Origin::Real => "real",
            Origin::Augmented => "augmented",
        };
        w.write_record([
            m.port.clone(),
            m.slot.index().to_string(),
            m.slot.frequency_ghz().to_string(),
            format!("{:.6}", m.config_time_s),
            origin.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_stats_csv(path: &Path, stats: &[SlotStatistics]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["slot", "frequency_ghz", "mean_s", "std_s", "count"]).map_err(csv_err(path))?;
    for s in stats {
        w.write_record([
            s.slot.index().to_string(),
            s.slot.frequency_ghz().to_string(),
            format!("{:.6}", s.mean_s),
            format!("{:.6}", s.std_s),
            s.count.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_fit(path: &Path, fit: &FitDocument) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(fit).expect("fit serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_fit(path: &Path) -> Result<FitDocument, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Format { path: path.display().to_string(), message: e.to_string() })
}
