use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CmisError, Measurement};
use crate::slot::{FrequencySlot, SLOT_COUNT};
use crate::types::SlotStatistics;

/// Parameters of `exp(N(mu, sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalFit {
    pub fn mean(&self) -> f64 {
        libm::exp(self.mu + self.sigma * self.sigma / 2.0)
    }

    pub fn std_dev(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        libm::sqrt(libm::expm1(s2)) * self.mean()
    }
}

/// Per-slot mean and population standard deviation, ascending by slot.
pub fn aggregate<'a, I>(measurements: I) -> Vec<SlotStatistics>
where
    I: IntoIterator<Item = &'a Measurement>,
{
    let mut samples: [Vec<f64>; SLOT_COUNT] = core::array::from_fn(|_| Vec::new());
    for m in measurements {
        samples[m.slot.index()].push(m.config_time_s);
    }
    FrequencySlot::all()
        .filter(|s| !samples[s.index()].is_empty())
        .map(|slot| {
            let xs = &samples[slot.index()];
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            SlotStatistics { slot, mean_s: mean, std_s: libm::sqrt(var), count: xs.len() as u32 }
        })
        .collect()
}

/// Moment-matched log-normal: same mean and standard deviation as `stats`.
pub fn fit_lognormal(stats: &SlotStatistics) -> Result<LogNormalFit, CmisError> {
    let (mean, std) = (stats.mean_s, stats.std_s);
    if !(mean.is_finite() && mean > 0.0 && std.is_finite() && std >= 0.0) {
        return Err(CmisError::InvalidStatistics { mean_s: mean, std_s: std });
    }
    let ratio = std / mean;
    let sigma2 = libm::log1p(ratio * ratio);
    Ok(LogNormalFit { mu: libm::log(mean) - sigma2 / 2.0, sigma: libm::sqrt(sigma2) })
}

/// Unweighted average of the per-slot means: the expected time under a
/// uniformly random slot choice.
pub fn mean_of_means(stats: &[SlotStatistics]) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    stats.iter().map(|s| s.mean_s).sum::<f64>() / stats.len() as f64
}
