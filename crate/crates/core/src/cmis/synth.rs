use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::slot::FrequencySlot;
use crate::types::SlotStatistics;

/// Recipe for a stand-in per-slot dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub mean_min_s: f64,
    pub mean_max_s: f64,
    /// Standard deviation as a fraction of each slot's mean.
    pub std_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Means uniform in [3.2, 5.4] s: the expected minimum is about three
    /// quarters of the expected overall mean.
    pub const ACCEPTANCE: SynthSpec =
        SynthSpec { mean_min_s: 3.2, mean_max_s: 5.4, std_fraction: 0.1, seed: 7 };
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::ACCEPTANCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub stats: Vec<SlotStatistics>,
    pub overall_mean_s: f64,
    pub min_mean_s: f64,
}

/// Draw 49 slot means uniformly in `[mean_min_s, mean_max_s]`. `count` is nominally 2,
/// as if each slot had been swept twice.
pub fn synthesize_dataset(spec: &SynthSpec) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = if spec.mean_min_s <= spec.mean_max_s {
        (spec.mean_min_s, spec.mean_max_s)
    } else {
        (spec.mean_max_s, spec.mean_min_s)
    };
    let stats: Vec<SlotStatistics> = FrequencySlot::all()
        .map(|slot| {
            let mean_s = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            SlotStatistics { slot, mean_s, std_s: spec.std_fraction.abs() * mean_s, count: 2 }
        })
        .collect();
    let overall_mean_s = super::mean_of_means(&stats);
    let min_mean_s = stats.iter().map(|s| s.mean_s).fold(f64::INFINITY, f64::min);
    SyntheticDataset { stats, overall_mean_s, min_mean_s }
}
