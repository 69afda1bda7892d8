use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{CmisError, CmisEvent, CmisEventKind};
use crate::time::SyslogTimestamp;

/// Marker separating the syslog header from the CMIS payload.
pub const CMIS_TAG: &str = "pmon#xcvrd: CMIS: ";

const HOST: &str = "sonic";

/// Parse one syslog line. Lines from other daemons, and CMIS lines that do
/// not mark a configuration step (e.g. `state=DP_DEINIT` status), yield `None`.
pub fn parse_log_line(line: &str) -> Result<Option<CmisEvent>, CmisError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let Some(tag_at) = line.find(CMIS_TAG) else {
        return Ok(None);
    };
    let malformed = || CmisError::MalformedLine(line.into());

    let header: Vec<&str> = line[..tag_at].split_whitespace().collect();
    // Mon DD HH:MM:SS.ffffff host SEVERITY
    if header.len() < 3 {
        return Err(malformed());
    }
    let timestamp: SyslogTimestamp = header[..3].join(" ").parse().map_err(|_| malformed())?;

    let payload = line[tag_at + CMIS_TAG.len()..].trim();
    let port_end = payload.find([':', ' ']).ok_or_else(malformed)?;
    let port = &payload[..port_end];
    if port.is_empty() {
        return Err(malformed());
    }
    let rest = payload[port_end..].trim_start_matches(':').trim();

    let kind = if rest == "force Datapath reinit" {
        CmisEventKind::DatapathReinit
    } else if rest.starts_with("Tuning in progress") {
        CmisEventKind::TuningWarning
    } else if let Some(freq) = rest.strip_prefix("configured laser frequency") {
        let tokens: Vec<&str> = freq.split_whitespace().collect();
        match tokens.as_slice() {
            [f, "GHz", "grid", "space", g, "GHz"] => CmisEventKind::ConfiguredFrequency {
                frequency_ghz: parse_ghz(f).ok_or_else(malformed)?,
                grid_ghz: parse_ghz(g).ok_or_else(malformed)?,
            },
            _ => return Err(malformed()),
        }
    } else if state_of(rest) == Some("AP_CONFIGURED") {
        CmisEventKind::ApConfigured
    } else {
        return Ok(None);
    };

    Ok(Some(CmisEvent { timestamp, port: port.into(), kind }))
}

fn parse_ghz(s: &str) -> Option<u32> {
    if s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().ok()
    } else {
        None
    }
}

fn state_of(rest: &str) -> Option<&str> {
    let after = &rest[rest.find("state=")? + "state=".len()..];
    after.trim_start().split([',', ' ']).next()
}

/// Canonical single-line rendering, as emitted by the transceiver simulator.
pub fn render_event(event: &CmisEvent) -> String {
    let ts = event.timestamp;
    let port = &event.port;
    match event.kind {
        CmisEventKind::DatapathReinit => {
            format!("{ts} {HOST} NOTICE {CMIS_TAG}{port}: force Datapath reinit")
        }
        CmisEventKind::ApConfigured => format!(
            "{ts} {HOST} NOTICE {CMIS_TAG}{port}: 400G, lanemask=0xff, state=AP_CONFIGURED, appl=1, retries=0"
        ),
        CmisEventKind::TuningWarning => format!(
            "{ts} {HOST} WARNING {CMIS_TAG}{port} Tuning in progress, channel selection may fail!"
        ),
        CmisEventKind::ConfiguredFrequency { frequency_ghz, grid_ghz } => format!(
            "{ts} {HOST} NOTICE {CMIS_TAG}{port} configured laser frequency {frequency_ghz} GHz grid space {grid_ghz} GHz"
        ),
    }
}

/// Re-join records that were hard-wrapped across lines: any line not starting
/// with a syslog timestamp continues the previous record.
pub fn join_continuations(text: &str) -> Vec<String> {
    let mut records: Vec<String> = Vec::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match records.last_mut() {
            Some(last) if !starts_with_timestamp(line) => {
                last.push(' ');
                last.push_str(line.trim());
            }
            _ => records.push(line.trim_end().into()),
        }
    }
    records
}

fn starts_with_timestamp(line: &str) -> bool {
    let fields: Vec<&str> = line.split_whitespace().take(3).collect();
    fields.len() == 3 && fields.join(" ").parse::<SyslogTimestamp>().is_ok()
}

/// Parse a whole capture, tolerating hard-wrapped records.
pub fn parse_log(text: &str) -> Result<Vec<CmisEvent>, CmisError> {
    let mut events = Vec::new();
    for record in join_continuations(text) {
        if let Some(event) = parse_log_line(&record)? {
            events.push(event);
        }
    }
    Ok(events)
}
