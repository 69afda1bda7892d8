//! Per-slot laser configuration latency model.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::cmis::LogNormalFit;
use crate::cmis::{fit_lognormal, CmisError};
use crate::slot::{FrequencySlot, SLOT_COUNT};
use crate::types::SlotStatistics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LaserModelError {
    #[error("laser model needs parameters for all 49 slots, slot {0} is missing")]
    MissingSlot(usize),
    #[error("invalid log-normal parameters for slot {slot}: mu {mu}, sigma {sigma}")]
    InvalidParameters { slot: usize, mu: f64, sigma: f64 },
    #[error(transparent)]
    Statistics(#[from] CmisError),
}

/// Configuration time for slot `k` is drawn as `exp(N(mu[k], sigma[k]^2))`
/// from a seeded generator owned by the model.
#[derive(Debug, Clone)]
pub struct LaserModel {
    params: Vec<LogNormalFit>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl LaserModel {
    pub fn new(params: Vec<LogNormalFit>, seed: u64) -> Result<Self, LaserModelError> {
        if params.len() != SLOT_COUNT {
            return Err(LaserModelError::MissingSlot(params.len().min(SLOT_COUNT)));
        }
        for (slot, p) in params.iter().enumerate() {
            if !(p.mu.is_finite() && p.sigma.is_finite() && p.sigma >= 0.0) {
                return Err(LaserModelError::InvalidParameters { slot, mu: p.mu, sigma: p.sigma });
            }
        }
        Ok(LaserModel { params, seed, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Moment-match every slot's statistics. All 49 slots must be present.
    pub fn from_stats(stats: &[SlotStatistics], seed: u64) -> Result<Self, LaserModelError> {
        let mut params = [None; SLOT_COUNT];
        for s in stats {
            params[s.slot.index()] = Some(fit_lognormal(s)?);
        }
        let params = params
            .iter()
            .enumerate()
            .map(|(i, p)| p.ok_or(LaserModelError::MissingSlot(i)))
            .collect::<Result<Vec<_>, _>>()?;
        LaserModel::new(params, seed)
    }

    /// Every slot takes exactly `secs`.
    pub fn constant(secs: f64, seed: u64) -> Self {
        let fit = LogNormalFit { mu: libm::log(secs), sigma: 0.0 };
        LaserModel::new(alloc::vec![fit; SLOT_COUNT], seed).expect("finite constant delay")
    }

    pub fn params(&self, slot: FrequencySlot) -> LogNormalFit {
        self.params[slot.index()]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A copy of this model's parameters with a fresh generator.
    pub fn reseeded(&self, seed: u64) -> LaserModel {
        LaserModel { params: self.params.clone(), seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Expected configuration time for `slot`.
    pub fn mean(&self, slot: FrequencySlot) -> f64 {
        self.params[slot.index()].mean()
    }

    pub fn sample_config_time(&mut self, slot: FrequencySlot) -> f64 {
        let p = self.params[slot.index()];
        if p.sigma == 0.0 {
            return libm::exp(p.mu);
        }
        LogNormal::new(p.mu, p.sigma)
            .expect("validated parameters")
            .sample(&mut self.rng)
    }
}

/// One row of the fitted-model JSON document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotFit {
    pub slot: FrequencySlot,
    pub frequency_ghz: u32,
    pub mean_s: f64,
    pub std_s: f64,
    pub count: u32,
    pub mu: f64,
    pub sigma: f64,
}

/// Fitted (mu, sigma) per slot, as written by `parse-logs` and `synth-dataset`
/// and loaded by simulated transceivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub slots: Vec<SlotFit>,
}

impl FitDocument {
    pub fn from_stats(stats: &[SlotStatistics]) -> Result<Self, CmisError> {
        let slots = stats
            .iter()
            .map(|s| {
                let fit = fit_lognormal(s)?;
                Ok(SlotFit {
                    slot: s.slot,
                    frequency_ghz: s.slot.frequency_ghz(),
                    mean_s: s.mean_s,
                    std_s: s.std_s,
                    count: s.count,
                    mu: fit.mu,
                    sigma: fit.sigma,
                })
            })
            .collect::<Result<Vec<_>, CmisError>>()?;
        Ok(FitDocument { slots })
    }

    pub fn stats(&self) -> Vec<SlotStatistics> {
        self.slots
            .iter()
            .map(|s| SlotStatistics { slot: s.slot, mean_s: s.mean_s, std_s: s.std_s, count: s.count })
            .collect()
    }

    pub fn laser_model(&self, seed: u64) -> Result<LaserModel, LaserModelError> {
        let mut params = [None; SLOT_COUNT];
        for s in &self.slots {
            params[s.slot.index()] = Some(LogNormalFit { mu: s.mu, sigma: s.sigma });
        }
        let params = params
            .iter()
            .enumerate()
            .map(|(i, p)| p.ok_or(LaserModelError::MissingSlot(i)))
            .collect::<Result<Vec<_>, _>>()?;
        LaserModel::new(params, seed)
    }
}
