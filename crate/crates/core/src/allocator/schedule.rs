use serde::{Deserialize, Serialize};

use super::AllocError;

/// Exponentially decaying exploration rate with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub epsilon0: f64,
    pub epsilon_min: f64,
    pub decay: f64,
    /// Episodes completed so far.
    pub episode: u64,
}

impl ExplorationSchedule {
    pub const DEFAULT_EPSILON0: f64 = 1.0;
    pub const DEFAULT_EPSILON_MIN: f64 = 0.05;
    /// 0.999002^3000 is about 0.05, so the floor is reached near episode 3000.
    pub const DEFAULT_DECAY: f64 = 0.999002;

    pub fn new(epsilon0: f64, epsilon_min: f64, decay: f64) -> Result<Self, AllocError> {
        let s = ExplorationSchedule { epsilon0, epsilon_min, decay, episode: 0 };
        s.validate()?;
        Ok(s)
    }

    pub(crate) fn validate(&self) -> Result<(), AllocError> {
        let ok = self.epsilon0 > 0.0
            && self.epsilon0 <= 1.0
            && self.epsilon_min > 0.0
            && self.epsilon_min <= self.epsilon0
            && self.decay > 0.0
            && self.decay < 1.0;
        if ok {
            Ok(())
        } else {
            Err(AllocError::InvalidSchedule)
        }
    }

    /// `max(epsilon_min, epsilon0 * decay^episode)`
    pub fn epsilon_at(&self, episode: u64) -> f64 {
        let e = episode.min(i32::MAX as u64) as f64;
        (self.epsilon0 * libm::pow(self.decay, e)).max(self.epsilon_min)
    }

    pub fn current_epsilon(&self) -> f64 {
        self.epsilon_at(self.episode)
    }

    pub fn advance(&mut self) {
        self.episode += 1;
    }
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule {
            epsilon0: Self::DEFAULT_EPSILON0,
            epsilon_min: Self::DEFAULT_EPSILON_MIN,
            decay: Self::DEFAULT_DECAY,
            episode: 0,
        }
    }
}

pub fn epsilon_at(schedule: &ExplorationSchedule, episode: u64) -> f64 {
    schedule.epsilon_at(episode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let s = ExplorationSchedule::default();
        assert_eq!(s.epsilon_at(0), 1.0);
        assert!((s.epsilon_at(3000) - 0.05).abs() <= 0.001, "{}", s.epsilon_at(3000));
        assert_eq!(s.epsilon_at(1_000_000), 0.05);
        assert_eq!(s.epsilon_at(u64::MAX), 0.05);
    }

    #[test]
    fn non_increasing() {
        let s = ExplorationSchedule::default();
        let mut prev = f64::INFINITY;
        for e in (0..10_000).step_by(7) {
            let eps = s.epsilon_at(e);
            assert!(eps <= prev);
            prev = eps;
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ExplorationSchedule::new(0.0, 0.0, 0.5).is_err());
        assert!(ExplorationSchedule::new(1.0, 0.5, 1.0).is_err());
        assert!(ExplorationSchedule::new(0.5, 0.6, 0.9).is_err());
        assert!(ExplorationSchedule::new(1.5, 0.1, 0.9).is_err());
        assert!(ExplorationSchedule::new(1.0, 0.05, 0.999).is_ok());
    }
}
