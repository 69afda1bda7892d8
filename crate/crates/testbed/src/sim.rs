//! Simulated whitebox: one daemon thread per pluggable applies desired
//! frequencies from the state store after a log-normal delay and writes the
//! CMIS lines the real driver would.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{LineWriter, Write};
use std::path::Path;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use optislot_core::slot::{frequency_to_slot, SlotError};
use optislot_core::time::secs_to_micros;
use optislot_core::transceiver::{configuration_log, TransceiverState};
use optislot_core::{FrequencySlot, LaserModel, SimTime};
use thiserror::Error;

use crate::clock::SimClock;
use crate::store::{DesiredWrite, StateStore, APPLIED_FREQ, STATUS};

/// Month and day at simulated time zero.
pub const DEFAULT_EPOCH: (u8, u8) = (6, 20);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    InvalidFrequency(#[from] SlotError),
    #[error("unknown port {0}")]
    UnknownPort(String),
    #[error("transceiver failure on {port}: {reason}")]
    Failed { port: String, reason: String },
}

/// Where CMIS lines go: an optional file, optionally standard error, and an
/// optional in-memory copy.
#[derive(Debug, Default)]
pub struct CmisLog {
    file: Option<Mutex<LineWriter<File>>>,
    stderr: bool,
    capture: Option<Mutex<Vec<String>>>,
}

impl CmisLog {
    pub fn discard() -> Self {
        CmisLog::default()
    }

    pub fn stderr() -> Self {
        CmisLog { stderr: true, ..CmisLog::default() }
    }

    pub fn capturing() -> Self {
        CmisLog { capture: Some(Mutex::new(Vec::new())), ..CmisLog::default() }
    }

    pub fn to_file(path: &Path, stderr: bool) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(CmisLog { file: Some(Mutex::new(LineWriter::new(file))), stderr, capture: None })
    }

    pub fn with_capture(mut self) -> Self {
        self.capture = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn emit(&self, lines: &[String]) {
        if let Some(file) = &self.file {
            let mut f = file.lock().unwrap();
            for line in lines {
                if let Err(e) = writeln!(f, "{line}") {
                    log::warn!("cmis log write failed: {e}");
                    break;
                }
            }
        }
        if self.stderr {
            let mut err = std::io::stderr().lock();
            for line in lines {
                let _ = writeln!(err, "{line}");
            }
        }
        if let Some(c) = &self.capture {
            c.lock().unwrap().extend(lines.iter().cloned());
        }
    }

    /// Captured lines so far (empty unless capturing).
    pub fn captured(&self) -> Vec<String> {
        self.capture.as_ref().map(|c| c.lock().unwrap().clone()).unwrap_or_default()
    }
}

/// One completed retune.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub port: String,
    pub slot: FrequencySlot,
    pub config_time_s: f64,
    pub start: SimTime,
    pub end: SimTime,
}

type Reply = Sender<Result<Configuration, SimError>>;

pub struct PortSpec {
    pub name: String,
    pub model: LaserModel,
}

pub struct Whitebox {
    id: String,
    store: Arc<StateStore<Reply>>,
    states: BTreeMap<String, Arc<Mutex<TransceiverState>>>,
    daemons: Vec<JoinHandle<()>>,
}

impl Whitebox {
    pub fn start(id: impl Into<String>, ports: Vec<PortSpec>, clock: Arc<SimClock>, log: Arc<CmisLog>, epoch: (u8, u8)) -> Self {
        let store = Arc::new(StateStore::new());
        let mut states = BTreeMap::new();
        let mut daemons = Vec::new();
        for spec in ports {
            let (tx, rx) = channel();
            store.subscribe(&spec.name, tx);
            let state = Arc::new(Mutex::new(TransceiverState::new(spec.name.clone())));
            states.insert(spec.name.clone(), state.clone());
            let daemon = PortDaemon {
                port: spec.name,
                model: spec.model,
                state,
                store: store.clone(),
                clock: clock.clone(),
                log: log.clone(),
                epoch,
                free_at: SimTime::ZERO,
            };
            daemons.push(
                std::thread::Builder::new()
                    .name(format!("xcvrd-{}", daemon.port))
                    .spawn(move || daemon.run(rx))
                    .expect("spawn port daemon"),
            );
        }
        Whitebox { id: id.into(), store, states, daemons }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn ports(&self) -> impl Iterator<Item = &str> {
        self.states.keys().map(String::as_str)
    }

    pub fn has_port(&self, port: &str) -> bool {
        self.states.contains_key(port)
    }

    pub fn state(&self, port: &str) -> Option<TransceiverState> {
        self.states.get(port).map(|s| s.lock().unwrap().clone())
    }

    pub fn store_value(&self, port: &str, field: &str) -> Option<String> {
        self.store.get(port, field)
    }

    /// Request a retune and wait for it. Calls on one port complete in
    /// submission order; different ports run in parallel.
    pub fn set_frequency(&self, port: &str, frequency_ghz: u32) -> Result<Configuration, SimError> {
        self.submit(port, frequency_ghz)?.recv().map_err(|_| SimError::Failed {
            port: port.into(),
            reason: "daemon stopped".into(),
        })?
    }

    /// Queue a retune without waiting.
    pub fn submit(&self, port: &str, frequency_ghz: u32) -> Result<Receiver<Result<Configuration, SimError>>, SimError> {
        if !self.has_port(port) {
            return Err(SimError::UnknownPort(port.into()));
        }
        frequency_to_slot(frequency_ghz)?;
        let (tx, rx) = channel();
        self.store
            .write_desired(port, frequency_ghz, tx)
            .ok_or_else(|| SimError::UnknownPort(port.into()))?;
        Ok(rx)
    }
}

impl Drop for Whitebox {
    fn drop(&mut self) {
        self.store.unsubscribe_all();
        for d in self.daemons.drain(..) {
            let _ = d.join();
        }
    }
}

struct PortDaemon {
    port: String,
    model: LaserModel,
    state: Arc<Mutex<TransceiverState>>,
    store: Arc<StateStore<Reply>>,
    clock: Arc<SimClock>,
    log: Arc<CmisLog>,
    epoch: (u8, u8),
    free_at: SimTime,
}

impl PortDaemon {
    fn run(mut self, rx: Receiver<DesiredWrite<Reply>>) {
        for write in rx {
            let result = self.apply(write.frequency_ghz);
            let _ = write.reply.send(result);
        }
    }

    fn apply(&mut self, frequency_ghz: u32) -> Result<Configuration, SimError> {
        let failed = |e: optislot_core::transceiver::TransitionError| SimError::Failed {
            port: self.port.clone(),
            reason: e.to_string(),
        };
        let slot = frequency_to_slot(frequency_ghz)?;
        self.state.lock().unwrap().reinit(frequency_ghz).map_err(failed)?;
        self.store.set(&self.port, STATUS, "DP_DEINIT");

        let delay_us = secs_to_micros(self.model.sample_config_time(slot)).max(1);
        let start = self.clock.now().max(self.free_at);
        self.clock.wait(delay_us);
        let end = start.saturating_add_micros(delay_us);

        {
            let mut st = self.state.lock().unwrap();
            st.ap_configured().map_err(failed)?;
            st.activate().map_err(failed)?;
        }
        self.free_at = end;
        self.clock.mark(end);
        self.store.set(&self.port, APPLIED_FREQ, frequency_ghz.to_string());
        self.store.set(&self.port, STATUS, "CONFIGURED_ACTIVE");
        self.log.emit(&configuration_log(&self.port, frequency_ghz, start, delay_us, self.epoch));

        Ok(Configuration {
            port: self.port.clone(),
            slot,
            config_time_s: optislot_core::time::micros_to_secs(delay_us),
            start,
            end,
        })
    }
}
