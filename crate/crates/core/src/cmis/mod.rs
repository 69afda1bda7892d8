//! CMIS driver log analysis: syslog parsing, reinit/configured pairing,
//! per-slot statistics, log-normal fitting and dataset augmentation.

mod augment;
mod pairing;
mod parse;
mod stats;
mod synth;

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slot::{FrequencySlot, SlotError};
use crate::time::SyslogTimestamp;

pub use augment::{augment, DEFAULT_AUGMENT_COPIES, DEFAULT_NOISE_FRACTION, MIN_AUGMENTED_TIME_S};
pub use pairing::{pair_events, Pairing};
pub use parse::{join_continuations, parse_log, parse_log_line, render_event, CMIS_TAG};
pub use stats::{aggregate, fit_lognormal, mean_of_means, LogNormalFit};
pub use synth::{synthesize_dataset, SynthSpec, SyntheticDataset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmisError {
    #[error("malformed CMIS line: {0}")]
    MalformedLine(String),
    #[error("non-monotonic timestamps on {port}: reinit at {start}, configured at {end}")]
    NonMonotonicTimestamps { port: String, start: SyslogTimestamp, end: SyslogTimestamp },
    #[error("invalid slot statistics: mean {mean_s} s, std {std_s} s")]
    InvalidStatistics { mean_s: f64, std_s: f64 },
    #[error(transparent)]
    Slot(#[from] SlotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmisEventKind {
    DatapathReinit,
    ApConfigured,
    TuningWarning,
    ConfiguredFrequency { frequency_ghz: u32, grid_ghz: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmisEvent {
    pub timestamp: SyslogTimestamp,
    pub port: String,
    pub kind: CmisEventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Real,
    Augmented,
}

/// A laser configuration time observed (or synthesised) for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub port: String,
    pub slot: FrequencySlot,
    pub config_time_s: f64,
    pub origin: Origin,
}
