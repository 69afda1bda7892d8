//! The packet controller: slot decisions, concurrent endpoint configuration,
//! feedback harvesting.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use optislot_core::{
    Allocator, AllocatorConfig, ConnectivityRequest, ExplorationSchedule, FrequencySlot, SimTime, TransceiverId,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientError, EditResult, NetconfClient};
use crate::clock::SimClock;
use crate::feedback_db::{timestamp, DbError, DbRecord, FeedbackDb};
use crate::netconf::ErrorTag;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("request {request_id}: {whitebox} rejected the configuration ({tag}): {message}")]
    RequestFailed { request_id: u64, whitebox: String, tag: ErrorTag, message: String },
    #[error("request {request_id}: session to {whitebox} is down: {reason}")]
    SessionDown { request_id: u64, whitebox: String, reason: String },
    #[error("unknown whitebox {0}")]
    UnknownWhitebox(String),
    #[error(transparent)]
    Db(#[from] DbError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub whitebox_id: String,
    pub addr: SocketAddr,
}

/// Controller configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub endpoints: Vec<EndpointConfig>,
    #[serde(default)]
    pub allocator: AllocatorConfig,
    #[serde(default)]
    pub schedule: ExplorationSchedule,
    pub db_path: PathBuf,
    #[serde(default)]
    pub reconnect_per_request: bool,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestOutcome {
    pub request_id: u64,
    pub slot: FrequencySlot,
    pub ingress_time_s: f64,
    pub egress_time_s: f64,
    pub latency_s: f64,
    pub episode: u64,
}

struct Endpoint {
    addr: SocketAddr,
    session: Option<NetconfClient>,
}

enum Leg {
    Done(f64),
    Rejected(ErrorTag, String),
    Down(String),
}

pub struct PacketController {
    endpoints: BTreeMap<String, Endpoint>,
    allocator: Allocator,
    db: FeedbackDb,
    clock: Option<Arc<SimClock>>,
    started: Instant,
    reconnect_per_request: bool,
    timeout: Duration,
    epsilon_override: Option<f64>,
    db_errors: u64,
}

impl PacketController {
    /// `clock` is the simulation clock shared with in-process agents; without
    /// one, latency is measured on the host clock.
    pub fn new(config: &ControllerConfig, allocator: Allocator, clock: Option<Arc<SimClock>>) -> Result<Self, ControllerError> {
        let endpoints = config
            .endpoints
            .iter()
            .map(|e| (e.whitebox_id.clone(), Endpoint { addr: e.addr, session: None }))
            .collect();
        Ok(PacketController {
            endpoints,
            allocator,
            db: FeedbackDb::open(&config.db_path)?,
            clock,
            started: Instant::now(),
            reconnect_per_request: config.reconnect_per_request,
            timeout: Duration::from_millis(config.timeout_ms),
            epsilon_override: None,
            db_errors: 0,
        })
    }

    pub fn allocator(&self) -> &Allocator {
        &self.allocator
    }

    pub fn into_allocator(self) -> Allocator {
        self.allocator
    }

    /// Use a fixed exploration rate instead of the schedule.
    pub fn set_epsilon_override(&mut self, epsilon: Option<f64>) {
        self.epsilon_override = epsilon;
    }

    pub fn db_errors(&self) -> u64 {
        self.db_errors
    }

    /// Open every session up front.
    pub fn connect_all(&mut self) -> Result<(), ControllerError> {
        let ids: Vec<String> = self.endpoints.keys().cloned().collect();
        for id in ids {
            self.ensure_session(&id, 0)?;
        }
        Ok(())
    }

    fn ensure_session(&mut self, whitebox: &str, request_id: u64) -> Result<(), ControllerError> {
        let timeout = self.timeout;
        let ep = self.endpoints.get_mut(whitebox).ok_or_else(|| ControllerError::UnknownWhitebox(whitebox.into()))?;
        if ep.session.is_none() {
            let client = NetconfClient::connect(ep.addr, Some(timeout)).map_err(|e| ControllerError::SessionDown {
                request_id,
                whitebox: whitebox.into(),
                reason: e.to_string(),
            })?;
            ep.session = Some(client);
        }
        Ok(())
    }

    fn now(&self) -> SimTime {
        match &self.clock {
            Some(c) => c.settle(),
            None => SimTime(self.started.elapsed().as_micros() as u64),
        }
    }

    /// Configure both endpoints of one request at the same time.
    pub fn fulfill(&mut self, request: &ConnectivityRequest) -> Result<RequestOutcome, ControllerError> {
        let id = request.request_id;
        let (ingress, egress) = (&request.ingress, &request.egress);
        self.ensure_session(&ingress.whitebox, id)?;
        self.ensure_session(&egress.whitebox, id)?;

        let episode = self.allocator.episode();
        let slot = self.allocator.select(ingress, egress, self.epsilon_override);
        let freq = slot.frequency_ghz();

        let mut s_in = self.endpoints.get_mut(&ingress.whitebox).unwrap().session.take().unwrap();
        let mut s_eg = self.endpoints.get_mut(&egress.whitebox).unwrap().session.take().unwrap();
        let t0 = self.now();
        let (leg_in, leg_eg) = std::thread::scope(|scope| {
            let h = scope.spawn(|| configure(&mut s_in, &ingress.port, freq));
            let leg_eg = configure(&mut s_eg, &egress.port, freq);
            (h.join().expect("endpoint thread panicked"), leg_eg)
        });
        let t1 = self.now();
        let latency_s = t1.micros_since(t0) as f64 / 1e6;

        for (tx, leg, session) in [(ingress, &leg_in, s_in), (egress, &leg_eg, s_eg)] {
            if !matches!(leg, Leg::Down(_)) && !self.reconnect_per_request {
                self.endpoints.get_mut(&tx.whitebox).unwrap().session = Some(session);
            }
        }

        for (tx, leg) in [(ingress, &leg_in), (egress, &leg_eg)] {
            if let Leg::Done(t) = *leg {
                self.record(tx, slot, t, t0, episode, id);
            }
        }

        for (tx, leg) in [(ingress, leg_in.clone_failure()), (egress, leg_eg.clone_failure())] {
            match leg {
                Some(Leg::Rejected(tag, message)) => {
                    return Err(ControllerError::RequestFailed { request_id: id, whitebox: tx.whitebox.clone(), tag, message })
                }
                Some(Leg::Down(reason)) => {
                    return Err(ControllerError::SessionDown { request_id: id, whitebox: tx.whitebox.clone(), reason })
                }
                _ => {}
            }
        }
        let (Leg::Done(ingress_time_s), Leg::Done(egress_time_s)) = (leg_in, leg_eg) else {
            unreachable!("failures returned above")
        };
        self.allocator.advance_episode();
        Ok(RequestOutcome { request_id: id, slot, ingress_time_s, egress_time_s, latency_s, episode })
    }

    fn record(&mut self, tx: &TransceiverId, slot: FrequencySlot, t: f64, t0: SimTime, episode: u64, request_id: u64) {
        if let Err(e) = self.allocator.observe(tx, slot, t) {
            log::error!("request {request_id}: {e}");
            return;
        }
        let rec = DbRecord {
            ts: timestamp(t0.saturating_add_micros(optislot_core::time::secs_to_micros(t))),
            whitebox: tx.whitebox.clone(),
            port: tx.port.clone(),
            slot,
            freq_ghz: slot.frequency_ghz(),
            config_time_s: t,
            episode,
            request_id,
        };
        if let Err(e) = self.db.append(&rec) {
            self.db_errors += 1;
            log::error!("request {request_id}: {e}");
        }
    }

    /// Fulfil requests one after another; failures do not stop the run.
    pub fn run_scenario(&mut self, requests: &[ConnectivityRequest]) -> Vec<Result<RequestOutcome, ControllerError>> {
        requests
            .iter()
            .map(|r| {
                let out = self.fulfill(r);
                if let Err(e) = &out {
                    log::warn!("{e}");
                }
                out
            })
            .collect()
    }
}

impl Leg {
    fn clone_failure(&self) -> Option<Leg> {
        match self {
            Leg::Done(_) => None,
            Leg::Rejected(t, m) => Some(Leg::Rejected(*t, m.clone())),
            Leg::Down(r) => Some(Leg::Down(r.clone())),
        }
    }
}

fn configure(session: &mut NetconfClient, port: &str, frequency_ghz: u32) -> Leg {
    match session.edit_config(port, frequency_ghz) {
        Ok(EditResult::Configured { config_time_s }) => Leg::Done(config_time_s),
        Ok(EditResult::Rejected { tag, message }) => Leg::Rejected(tag, message),
        Err(e @ (ClientError::Io(_) | ClientError::Closed | ClientError::Protocol(_) | ClientError::Unexpected(_))) => {
            Leg::Down(e.to_string())
        }
    }
}
