//! Datapath state machine of a coherent pluggable and the CMIS log lines it
//! produces while retuning.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmis::{render_event, CmisEvent, CmisEventKind, CMIS_TAG};
use crate::slot::GRID_SPACING_GHZ;
use crate::time::{SimTime, SyslogTimestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DpState {
    Idle,
    DpDeinit,
    ApConfigured,
    ConfiguredActive,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal datapath transition {from:?} -> {to:?} on {port}")]
pub struct TransitionError {
    pub port: String,
    pub from: DpState,
    pub to: DpState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransceiverState {
    pub port: String,
    pub dp_state: DpState,
    pub desired_frequency_ghz: Option<u32>,
    pub applied_frequency_ghz: Option<u32>,
}

impl TransceiverState {
    pub fn new(port: impl Into<String>) -> Self {
        TransceiverState {
            port: port.into(),
            dp_state: DpState::Idle,
            desired_frequency_ghz: None,
            applied_frequency_ghz: None,
        }
    }

    fn step(&mut self, allowed_from: &[DpState], to: DpState) -> Result<(), TransitionError> {
        if !allowed_from.contains(&self.dp_state) {
            return Err(TransitionError { port: self.port.clone(), from: self.dp_state, to });
        }
        self.dp_state = to;
        Ok(())
    }

    /// Accept a new desired frequency and tear the datapath down.
    pub fn reinit(&mut self, frequency_ghz: u32) -> Result<(), TransitionError> {
        self.step(&[DpState::Idle, DpState::ConfiguredActive], DpState::DpDeinit)?;
        self.desired_frequency_ghz = Some(frequency_ghz);
        self.applied_frequency_ghz = None;
        Ok(())
    }

    pub fn ap_configured(&mut self) -> Result<(), TransitionError> {
        self.step(&[DpState::DpDeinit], DpState::ApConfigured)
    }

    /// Laser locked on the desired frequency.
    pub fn activate(&mut self) -> Result<u32, TransitionError> {
        self.step(&[DpState::ApConfigured], DpState::ConfiguredActive)?;
        self.applied_frequency_ghz = self.desired_frequency_ghz;
        Ok(self.applied_frequency_ghz.expect("desired frequency set by reinit"))
    }
}

// Where the intermediate lines fall inside the configuration window, in
// parts per million of the total delay (taken from a real xcvrd capture).
const DEINIT_ACK_PPM: u64 = 4_320;
const AP_CONFIGURED_PPM: u64 = 970_200;
const TUNING_WARNING_PPM: u64 = 981_100;

/// CMIS lines for one retune of `port` starting at `start` and lasting
/// `delay_us`. The first line is the reinit and the last the configured
/// frequency, so their timestamp difference is exactly `delay_us`.
pub fn configuration_log(
    port: &str,
    frequency_ghz: u32,
    start: SimTime,
    delay_us: u64,
    epoch: (u8, u8),
) -> Vec<String> {
    let at = |ppm: u64| {
        let offset = (delay_us as u128 * ppm as u128 / 1_000_000) as u64;
        SyslogTimestamp::from_sim(epoch.0, epoch.1, start.saturating_add_micros(offset))
    };
    let event = |ppm: u64, kind: CmisEventKind| {
        render_event(&CmisEvent { timestamp: at(ppm), port: port.into(), kind })
    };
    let status = |ppm: u64, state: &str| {
        format!(
            "{} sonic NOTICE {CMIS_TAG}{port}: 400G, lanemask=0xff, state={state}, appl=1, retries=0",
            at(ppm)
        )
    };
    alloc::vec![
        event(0, CmisEventKind::DatapathReinit),
        status(DEINIT_ACK_PPM, "DP_DEINIT"),
        status(AP_CONFIGURED_PPM, "DP_DEINIT"),
        event(AP_CONFIGURED_PPM, CmisEventKind::ApConfigured),
        event(TUNING_WARNING_PPM, CmisEventKind::TuningWarning),
        event(
            1_000_000,
            CmisEventKind::ConfiguredFrequency { frequency_ghz, grid_ghz: GRID_SPACING_GHZ }
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmis::{pair_events, parse_log_line};

    #[test]
    fn legal_cycle_and_reconfigure() {
        let mut t = TransceiverState::new("Ethernet0");
        t.reinit(192_500).unwrap();
        assert_eq!(t.dp_state, DpState::DpDeinit);
        assert_eq!(t.applied_frequency_ghz, None);
        t.ap_configured().unwrap();
        assert_eq!(t.activate().unwrap(), 192_500);
        assert_eq!(t.dp_state, DpState::ConfiguredActive);
        assert_eq!(t.applied_frequency_ghz, Some(192_500));
        t.reinit(191_300).unwrap();
        assert_eq!(t.applied_frequency_ghz, None);
    }

    #[test]
    fn illegal_transitions() {
        let mut t = TransceiverState::new("Ethernet0");
        assert!(t.ap_configured().is_err());
        assert!(t.activate().is_err());
        t.reinit(192_500).unwrap();
        assert!(t.reinit(192_600).is_err());
        assert!(t.activate().is_err());
    }

    #[test]
    fn emitted_log_pairs_to_the_delay() {
        // 12:30:41.069151 on the epoch day
        let start = SimTime(45_041_069_151);
        let lines = configuration_log("Ethernet0", 192_500, start, 3_513_673, (6, 20));
        assert_eq!(lines.len(), 6);
        assert_eq!(
            lines[0],
            "Jun 20 12:30:41.069151 sonic NOTICE pmon#xcvrd: CMIS: Ethernet0: force Datapath reinit"
        );
        assert!(lines[5].ends_with("configured laser frequency 192500 GHz grid space 100 GHz"));
        let events: Vec<_> = lines.iter().filter_map(|l| parse_log_line(l).unwrap()).collect();
        assert_eq!(events.len(), 4);
        assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        let pairing = pair_events(&events).unwrap();
        assert_eq!(pairing.measurements[0].config_time_s, 3.513673);
    }
}
