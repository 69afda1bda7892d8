use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slot::FrequencySlot;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("transceiver id needs a non-empty whitebox and port without '/' (got {whitebox:?}/{port:?})")]
    InvalidTransceiver { whitebox: String, port: String },
    #[error("request {0}: ingress and egress are on the same whitebox")]
    SameWhitebox(u64),
    #[error("configuration time must be positive and finite, got {0}")]
    InvalidConfigTime(f64),
}

/// A pluggable, addressed by the whitebox hosting it and its port name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransceiverId {
    pub whitebox: String,
    pub port: String,
}

impl TransceiverId {
    pub fn new(whitebox: impl Into<String>, port: impl Into<String>) -> Result<Self, DomainError> {
        let (whitebox, port) = (whitebox.into(), port.into());
        let ok = |s: &str| !s.is_empty() && !s.contains('/') && !s.chars().any(char::is_whitespace);
        if !ok(&whitebox) || !ok(&port) {
            return Err(DomainError::InvalidTransceiver { whitebox, port });
        }
        Ok(TransceiverId { whitebox, port })
    }

    /// Parse the `whitebox/port` key used in model documents.
    pub fn from_key(key: &str) -> Result<Self, DomainError> {
        match key.split_once('/') {
            Some((wb, port)) => TransceiverId::new(wb, port),
            None => Err(DomainError::InvalidTransceiver { whitebox: key.into(), port: String::new() }),
        }
    }
}

impl fmt::Display for TransceiverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.whitebox, self.port)
    }
}

/// An HrCTL request to light a path between two whiteboxes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityRequest {
    pub request_id: u64,
    pub ingress: TransceiverId,
    pub egress: TransceiverId,
}

impl ConnectivityRequest {
    pub fn new(request_id: u64, ingress: TransceiverId, egress: TransceiverId) -> Result<Self, DomainError> {
        if ingress.whitebox == egress.whitebox {
            return Err(DomainError::SameWhitebox(request_id));
        }
        Ok(ConnectivityRequest { request_id, ingress, egress })
    }
}

/// One measured laser configuration time; the allocator's reward source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub transceiver: TransceiverId,
    pub slot: FrequencySlot,
    pub config_time_s: f64,
    pub wall_time: SimTime,
}

impl FeedbackRecord {
    pub fn new(
        transceiver: TransceiverId,
        slot: FrequencySlot,
        config_time_s: f64,
        wall_time: SimTime,
    ) -> Result<Self, DomainError> {
        check_config_time(config_time_s)?;
        Ok(FeedbackRecord { transceiver, slot, config_time_s, wall_time })
    }
}

pub(crate) fn check_config_time(t: f64) -> Result<(), DomainError> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(DomainError::InvalidConfigTime(t))
    }
}

/// Aggregated configuration time for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotStatistics {
    pub slot: FrequencySlot,
    pub mean_s: f64,
    pub std_s: f64,
    pub count: u32,
}
