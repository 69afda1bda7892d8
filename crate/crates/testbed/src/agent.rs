//! The whitebox-resident netconf-lite server.

use std::collections::VecDeque;
use std::io::{ErrorKind, Read, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use optislot_core::laser::FitDocument;
use optislot_core::{FeedbackRecord, TransceiverId, GRID_SPACING_GHZ};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{ClockMode, SimClock};
use crate::netconf::{encode, Body, ErrorTag, FrameDecoder, RpcMessage, BASE_CAPABILITY, PLUGGABLE_CAPABILITY};
use crate::sim::{CmisLog, PortSpec, SimError, Whitebox, DEFAULT_EPOCH};

pub const TELEMETRY_CAPACITY: usize = 100;
const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("invalid whitebox config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Startup configuration document of an agent process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteboxConfig {
    pub whitebox_id: String,
    pub listen: SocketAddr,
    pub ports: Vec<PortConfig>,
    #[serde(default)]
    pub clock: ClockMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortConfig {
    pub name: String,
    /// Fit document (per-slot mu/sigma); relative paths resolve against the config file.
    pub model_fit_file: PathBuf,
}

impl WhiteboxConfig {
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| AgentError::Config(e.to_string()))
    }

    /// Resolve model files and build a runnable spec with its own clock.
    pub fn into_spec(self, base_dir: &Path, log_to_stderr: bool) -> Result<AgentSpec, AgentError> {
        if self.ports.is_empty() {
            return Err(AgentError::Config("at least one port is required".into()));
        }
        let mut names: Vec<&str> = self.ports.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(AgentError::Config("port names must be unique".into()));
        }
        let mut ports = Vec::new();
        for (i, p) in self.ports.iter().enumerate() {
            TransceiverId::new(&self.whitebox_id, &p.name).map_err(|e| AgentError::Config(e.to_string()))?;
            let path = base_dir.join(&p.model_fit_file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
            let doc: FitDocument = serde_json::from_str(&text)
                .map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
            let model = doc
                .laser_model(crate::seeds::port_seed(self.seed, i as u64))
                .map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
            ports.push(PortSpec { name: p.name.clone(), model });
        }
        let log = match &self.log_file {
            Some(file) => CmisLog::to_file(&base_dir.join(file), log_to_stderr)?,
            None if log_to_stderr => CmisLog::stderr(),
            None => CmisLog::discard(),
        };
        Ok(AgentSpec {
            whitebox_id: self.whitebox_id,
            listen: self.listen,
            ports,
            clock: Arc::new(SimClock::new(self.clock, optislot_core::SimTime::ZERO)),
            log: Arc::new(log),
            epoch: DEFAULT_EPOCH,
        })
    }
}

/// Everything needed to run one agent in-process.
pub struct AgentSpec {
    pub whitebox_id: String,
    pub listen: SocketAddr,
    pub ports: Vec<PortSpec>,
    pub clock: Arc<SimClock>,
    pub log: Arc<CmisLog>,
    pub epoch: (u8, u8),
}

struct Shared {
    whitebox: Whitebox,
    telemetry: RwLock<VecDeque<FeedbackRecord>>,
    stopping: AtomicBool,
}

struct Running {
    acceptor: JoinHandle<()>,
    sessions: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

pub struct AgentHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    running: Option<Running>,
}

/// Bind and start accepting sessions.
pub fn serve(spec: AgentSpec) -> Result<AgentHandle, AgentError> {
    let listener = TcpListener::bind(spec.listen).map_err(|source| AgentError::Bind { addr: spec.listen, source })?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        whitebox: Whitebox::start(spec.whitebox_id, spec.ports, spec.clock, spec.log, spec.epoch),
        telemetry: RwLock::new(VecDeque::with_capacity(TELEMETRY_CAPACITY)),
        stopping: AtomicBool::new(false),
    });
    let sessions: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
    let acceptor = {
        let (shared, sessions) = (shared.clone(), sessions.clone());
        std::thread::Builder::new()
            .name(format!("agent-{}", shared.whitebox.id()))
            .spawn(move || accept_loop(listener, shared, sessions))?
    };
    log::info!("agent {} listening on {addr}", shared.whitebox.id());
    Ok(AgentHandle { addr, shared, running: Some(Running { acceptor, sessions }) })
}

impl AgentHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn whitebox_id(&self) -> &str {
        self.shared.whitebox.id()
    }

    pub fn ports(&self) -> Vec<String> {
        self.shared.whitebox.ports().map(str::to_string).collect()
    }

    /// Most recent successful configurations, oldest first.
    pub fn telemetry(&self) -> Vec<FeedbackRecord> {
        self.shared.telemetry.read().unwrap().iter().cloned().collect()
    }

    pub fn is_running(&self) -> bool {
        self.running.is_some()
    }

    /// Stop accepting, let in-flight configurations reply, then close. Idempotent.
    pub fn shutdown(&mut self) {
        let Some(running) = self.running.take() else {
            return;
        };
        self.shared.stopping.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(IpAddr::V4(Ipv4Addr::LOCALHOST));
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_millis(200));
        let _ = running.acceptor.join();
        let sessions: Vec<_> = running.sessions.lock().unwrap().drain(..).collect();
        for s in sessions {
            let _ = s.join();
        }
        log::info!("agent {} stopped", self.shared.whitebox.id());
    }
}

impl Drop for AgentHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, sessions: Arc<Mutex<Vec<JoinHandle<()>>>>) {
    for conn in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let shared = shared.clone();
        let handle = std::thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(reason) = Session::new(stream, shared).run() {
                log::warn!("session {peer:?} closed: {reason}");
            }
        });
        let mut s = sessions.lock().unwrap();
        s.retain(|h| !h.is_finished());
        s.push(handle);
    }
}

struct Session {
    stream: TcpStream,
    shared: Arc<Shared>,
    decoder: FrameDecoder,
    greeted: bool,
}

impl Session {
    fn new(stream: TcpStream, shared: Arc<Shared>) -> Self {
        Session { stream, shared, decoder: FrameDecoder::new(), greeted: false }
    }

    /// Serve until the peer closes, misbehaves, or the agent stops.
    fn run(mut self) -> Result<(), String> {
        self.stream.set_read_timeout(Some(POLL)).map_err(|e| e.to_string())?;
        let _ = self.stream.set_nodelay(true);
        self.send(&RpcMessage::new(
            1,
            Body::Hello { capabilities: vec![BASE_CAPABILITY.into(), PLUGGABLE_CAPABILITY.into()] },
        ))?;
        let mut buf = [0u8; 4096];
        loop {
            while let Some(msg) = self.decoder.next_message() {
                let msg = msg.map_err(|e| e.to_string())?;
                if let Some(reply) = self.handle(msg)? {
                    self.send(&reply)?;
                }
            }
            if self.shared.stopping.load(Ordering::SeqCst) && self.decoder.pending() == 0 {
                return Ok(());
            }
            match self.stream.read(&mut buf) {
                Ok(0) => return Ok(()),
                Ok(n) => self.decoder.push(&buf[..n]),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
    }

    fn send(&mut self, msg: &RpcMessage) -> Result<(), String> {
        self.stream.write_all(&encode(msg)).map_err(|e| e.to_string())
    }

    fn handle(&mut self, msg: RpcMessage) -> Result<Option<RpcMessage>, String> {
        let id = msg.message_id;
        if !self.greeted {
            return match msg.body {
                Body::Hello { .. } => {
                    self.greeted = true;
                    Ok(None)
                }
                _ => Err("request before hello".into()),
            };
        }
        let body = match msg.body {
            Body::EditConfig { port, frequency_ghz, grid_ghz } => self.edit_config(&port, frequency_ghz, grid_ghz),
            Body::GetTelemetry { port } => {
                let ring = self.shared.telemetry.read().unwrap();
                let records = ring
                    .iter()
                    .filter(|r| port.as_ref().is_none_or(|p| &r.transceiver.port == p))
                    .cloned()
                    .collect();
                Body::TelemetryReply { records }
            }
            other => return Err(format!("unexpected {other:?}")),
        };
        Ok(Some(RpcMessage::new(id, body)))
    }

    fn edit_config(&self, port: &str, frequency_ghz: u32, grid_ghz: u32) -> Body {
        let wb = &self.shared.whitebox;
        if !wb.has_port(port) {
            return error(ErrorTag::BadElement, format!("unknown port {port}"));
        }
        if grid_ghz != GRID_SPACING_GHZ {
            return error(ErrorTag::InvalidValue, format!("unsupported grid spacing {grid_ghz} GHz"));
        }
        match wb.set_frequency(port, frequency_ghz) {
            Ok(c) => {
                let transceiver = TransceiverId::new(wb.id(), port).expect("validated at startup");
                let record = FeedbackRecord::new(transceiver, c.slot, c.config_time_s, c.end).expect("positive delay");
                let mut ring = self.shared.telemetry.write().unwrap();
                if ring.len() == TELEMETRY_CAPACITY {
                    ring.pop_front();
                }
                ring.push_back(record);
                Body::OkReply { config_time_s: Some(c.config_time_s) }
            }
            Err(SimError::InvalidFrequency(e)) => error(ErrorTag::InvalidValue, e.to_string()),
            Err(SimError::UnknownPort(p)) => error(ErrorTag::BadElement, format!("unknown port {p}")),
            Err(e @ SimError::Failed { .. }) => error(ErrorTag::OperationFailed, e.to_string()),
        }
    }
}

fn error(tag: ErrorTag, message: String) -> Body {
    Body::ErrorReply { tag, message }
}
