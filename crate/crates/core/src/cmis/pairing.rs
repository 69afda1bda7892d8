use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{CmisError, CmisEvent, CmisEventKind, Measurement, Origin};
use crate::slot::frequency_to_slot;
use crate::time::{micros_to_secs, SyslogTimestamp};

/// Result of matching reinit/configured pairs across a capture.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pairing {
    pub measurements: Vec<Measurement>,
    /// Reinits that never saw a configured event (superseded or cut off at stream end).
    pub unmatched_reinits: usize,
}

/// Match each `DatapathReinit` with the next `ConfiguredFrequency` on the
/// same port. The configuration time is the timestamp difference. A second
/// reinit before the first completes restarts the window; the superseded
/// one counts as unmatched.
pub fn pair_events<'a, I>(events: I) -> Result<Pairing, CmisError>
where
    I: IntoIterator<Item = &'a CmisEvent>,
{
    let mut open: BTreeMap<&'a str, SyslogTimestamp> = BTreeMap::new();
    let mut out = Pairing::default();

    for event in events {
        match event.kind {
            CmisEventKind::DatapathReinit => {
                if open.insert(&event.port, event.timestamp).is_some() {
                    out.unmatched_reinits += 1;
                }
            }
            CmisEventKind::ConfiguredFrequency { frequency_ghz, .. } => {
                let Some(start) = open.remove(event.port.as_str()) else {
                    continue;
                };
                let delta = event.timestamp.micros_since(&start);
                if delta <= 0 {
                    return Err(CmisError::NonMonotonicTimestamps {
                        port: String::from(event.port.as_str()),
                        start,
                        end: event.timestamp,
                    });
                }
                out.measurements.push(Measurement {
                    port: event.port.clone(),
                    slot: frequency_to_slot(frequency_ghz)?,
                    config_time_s: micros_to_secs(delta as u64),
                    origin: Origin::Real,
                });
            }
            CmisEventKind::ApConfigured | CmisEventKind::TuningWarning => {}
        }
    }
    out.unmatched_reinits += open.len();
    Ok(out)
}
