use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Measurement, Origin};

pub const DEFAULT_AUGMENT_COPIES: usize = 8;
/// Noise standard deviation as a fraction of each original value.
pub const DEFAULT_NOISE_FRACTION: f64 = 0.05;
/// Floor applied to noisy copies.
pub const MIN_AUGMENTED_TIME_S: f64 = 0.1;

/// Extend a dataset with `copies` noisy replicas of every measurement.
///
/// Each original is followed by its replicas. A replica keeps the port and
/// slot and draws `original + N(0, (noise_fraction * original)^2)`, floored
/// at 0.1 s. With `noise_fraction == 0` replicas are exact duplicates.
pub fn augment(measurements: &[Measurement], copies: usize, noise_fraction: f64, seed: u64) -> Vec<Measurement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_fraction = if noise_fraction.is_finite() { noise_fraction.max(0.0) } else { 0.0 };
    let mut out = Vec::with_capacity(measurements.len() * (copies + 1));
    for original in measurements {
        out.push(original.clone());
        let noise = Normal::new(0.0, noise_fraction * original.config_time_s.abs())
            .expect("finite, non-negative standard deviation");
        for _ in 0..copies {
            let config_time_s = if noise_fraction > 0.0 {
                (original.config_time_s + noise.sample(&mut rng)).max(MIN_AUGMENTED_TIME_S)
            } else {
                original.config_time_s
            };
            out.push(Measurement { config_time_s, origin: Origin::Augmented, ..original.clone() });
        }
    }
    out
}
