//! Simulated time shared by agents and the controller.
//!
//! In logical mode nothing sleeps: agents register when their configurations
//! end and the controller settles the clock forward once both endpoints have
//! replied. In scaled mode delays really elapse, divided by the factor.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use optislot_core::SimTime;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ClockMode {
    #[default]
    Logical,
    Scaled { factor: f64 },
}

impl FromStr for ClockMode {
    type Err = String;

    /// `logical` or `scaled:<factor>`.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "logical" {
            return Ok(ClockMode::Logical);
        }
        let factor = s
            .strip_prefix("scaled:")
            .and_then(|f| f.parse::<f64>().ok())
            .ok_or_else(|| format!("invalid clock {s:?}: expected logical or scaled:<factor>"))?;
        if !(factor.is_finite() && factor > 0.0) {
            return Err(format!("clock factor must be positive, got {factor}"));
        }
        Ok(ClockMode::Scaled { factor })
    }
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockMode::Logical => f.write_str("logical"),
            ClockMode::Scaled { factor } => write!(f, "scaled:{factor}"),
        }
    }
}

#[derive(Debug, Default)]
struct Logical {
    now: u64,
    horizon: u64,
}

#[derive(Debug)]
pub struct SimClock {
    mode: ClockMode,
    start: SimTime,
    origin: Instant,
    logical: Mutex<Logical>,
}

impl SimClock {
    pub fn new(mode: ClockMode, start: SimTime) -> Self {
        SimClock {
            mode,
            start,
            origin: Instant::now(),
            logical: Mutex::new(Logical { now: start.0, horizon: start.0 }),
        }
    }

    pub fn logical() -> Self {
        SimClock::new(ClockMode::Logical, SimTime::ZERO)
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    /// Smallest latency difference the clock can resolve, in seconds.
    pub fn resolution_s(&self) -> f64 {
        match self.mode {
            ClockMode::Logical => 1e-6,
            // a millisecond of host scheduling jitter, in simulated time
            ClockMode::Scaled { factor } => 1e-3 * factor,
        }
    }

    pub fn now(&self) -> SimTime {
        match self.mode {
            ClockMode::Logical => SimTime(self.logical.lock().unwrap().now),
            ClockMode::Scaled { factor } => {
                let elapsed = self.origin.elapsed().as_secs_f64() * factor;
                self.start.saturating_add_micros((elapsed * 1e6) as u64)
            }
        }
    }

    /// Block for a simulated delay (no-op in logical mode).
    pub fn wait(&self, delay_us: u64) {
        if let ClockMode::Scaled { factor } = self.mode {
            std::thread::sleep(Duration::from_secs_f64(delay_us as f64 / 1e6 / factor));
        }
    }

    /// Note that some activity runs until `end`.
    pub fn mark(&self, end: SimTime) {
        if self.mode == ClockMode::Logical {
            let mut l = self.logical.lock().unwrap();
            l.horizon = l.horizon.max(end.0);
        }
    }

    /// Advance to the latest marked end and return the new time.
    pub fn settle(&self) -> SimTime {
        match self.mode {
            ClockMode::Logical => {
                let mut l = self.logical.lock().unwrap();
                l.now = l.now.max(l.horizon);
                SimTime(l.now)
            }
            ClockMode::Scaled { .. } => self.now(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_modes() {
        assert_eq!("logical".parse::<ClockMode>().unwrap(), ClockMode::Logical);
        assert_eq!("scaled:10".parse::<ClockMode>().unwrap(), ClockMode::Scaled { factor: 10.0 });
        assert!("scaled:0".parse::<ClockMode>().is_err());
        assert!("scaled:x".parse::<ClockMode>().is_err());
        assert!("wall".parse::<ClockMode>().is_err());
        assert_eq!(ClockMode::Scaled { factor: 2.5 }.to_string(), "scaled:2.5");
    }

    #[test]
    fn logical_time_moves_only_on_settle() {
        let c = SimClock::logical();
        let t0 = Instant::now();
        c.wait(4_340_000);
        assert!(t0.elapsed() < Duration::from_millis(50));
        c.mark(SimTime(3_500_000));
        c.mark(SimTime(4_000_000));
        assert_eq!(c.now(), SimTime::ZERO);
        assert_eq!(c.settle(), SimTime(4_000_000));
        c.mark(SimTime(1));
        assert_eq!(c.settle(), SimTime(4_000_000));
    }

    #[test]
    fn scaled_wait_sleeps_delay_over_factor() {
        let c = SimClock::new(ClockMode::Scaled { factor: 10.0 }, SimTime::ZERO);
        let t0 = Instant::now();
        c.wait(434_000);
        let wall = t0.elapsed().as_secs_f64();
        assert!((0.0434..0.2).contains(&wall), "{wall}");
        assert!(c.now().as_secs_f64() >= 0.434);
    }
}
