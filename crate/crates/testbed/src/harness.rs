//! Request generation and the train / operate / scale experiments.

use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use optislot_core::allocator::{AllocError, Backend};
use optislot_core::cmis::{synthesize_dataset, SynthSpec};
use optislot_core::laser::FitDocument;
use optislot_core::{
    Allocator, AllocatorConfig, ConnectivityRequest, ExplorationSchedule, SimTime, SlotStatistics, TransceiverId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{serve, AgentError, AgentHandle, AgentSpec};
use crate::clock::{ClockMode, SimClock};
use crate::controller::{ControllerConfig, ControllerError, EndpointConfig, PacketController, RequestOutcome};
use crate::dataset::{read_fit, DatasetError};
use crate::feedback_db;
use crate::seeds;
use crate::sim::{CmisLog, PortSpec, DEFAULT_EPOCH};

pub const DEFAULT_PLUGGABLES: usize = 4;
pub const DEFAULT_EPISODES: u64 = 3000;
pub const DEFAULT_REQUESTS: u64 = 500;
pub const DEFAULT_SCALE_COUNTS: [usize; 4] = [2, 4, 8, 16];
/// Training budget per pluggable in scale runs; larger topologies need more
/// episodes before every transceiver's row has seen enough slots.
pub const SCALE_EPISODES_PER_PLUGGABLE: u64 = 750;
pub const MOVING_AVERAGE_WINDOW: usize = 200;
pub const PORT_NAME: &str = "Ethernet0";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid topology: {0} whiteboxes, at least 2 are needed")]
    InvalidTopology(usize),
    #[error("environment error: {0}")]
    Environment(String),
    #[error("model not found: {}", .0.display())]
    ModelNotFound(PathBuf),
    #[error("model: {0}")]
    Model(#[from] AllocError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Db(#[from] crate::feedback_db::DbError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
}

fn out_err<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> HarnessError + '_ {
    move |e| HarnessError::Output { path: path.to_path_buf(), message: e.to_string() }
}

/// `count` requests over uniformly drawn ordered pairs of distinct endpoints.
pub fn generate_requests(
    endpoints: &[TransceiverId],
    count: u64,
    seed: u64,
) -> Result<Vec<ConnectivityRequest>, HarnessError> {
    let n = endpoints.len();
    if n < 2 {
        return Err(HarnessError::InvalidTopology(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            ConnectivityRequest::new(id, endpoints[i].clone(), endpoints[j].clone())
                .map_err(|_| HarnessError::InvalidTopology(n))
        })
        .collect()
}

/// Where per-slot laser behaviour comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SynthSpec),
    FitFile(PathBuf),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SynthSpec::ACCEPTANCE)
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<FitDocument, HarnessError> {
        match self {
            DatasetSource::Synthetic(spec) => {
                let stats = synthesize_dataset(spec).stats;
                FitDocument::from_stats(&stats).map_err(|e| HarnessError::Dataset(e.into()))
            }
            DatasetSource::FitFile(path) => Ok(read_fit(path)?),
        }
    }
}

/// Mean of the slot means and the smallest slot mean.
pub fn dataset_means(stats: &[SlotStatistics]) -> (f64, f64) {
    let mean = optislot_core::cmis::mean_of_means(stats);
    let best = stats.iter().map(|s| s.mean_s).fold(f64::INFINITY, f64::min);
    (mean, best)
}

/// In-process agents, one pluggable each, sharing one clock.
pub struct Testbed {
    agents: Vec<AgentHandle>,
    clock: Arc<SimClock>,
    endpoints: Vec<TransceiverId>,
}

impl Testbed {
    pub fn boot(
        fit: &FitDocument,
        pluggables: usize,
        mode: ClockMode,
        seed: u64,
        log_dir: Option<&Path>,
    ) -> Result<Self, HarnessError> {
        let clock = Arc::new(SimClock::new(mode, SimTime::ZERO));
        let mut agents = Vec::with_capacity(pluggables);
        let mut endpoints = Vec::with_capacity(pluggables);
        for i in 0..pluggables {
            let id = format!("wb{i}");
            let model = fit
                .laser_model(seeds::port_seed(seed, i as u64))
                .map_err(|e| HarnessError::Dataset(DatasetError::Format { path: "dataset".into(), message: e.to_string() }))?;
            let log = match log_dir {
                Some(dir) => {
                    let path = dir.join(format!("{id}.log"));
                    let _ = std::fs::remove_file(&path);
                    CmisLog::to_file(&path, false).map_err(out_err(&path))?
                }
                None => CmisLog::discard(),
            };
            let spec = AgentSpec {
                whitebox_id: id.clone(),
                listen: SocketAddr::from((Ipv4Addr::LOCALHOST, 0)),
                ports: vec![PortSpec { name: PORT_NAME.into(), model }],
                clock: clock.clone(),
                log: Arc::new(log),
                epoch: DEFAULT_EPOCH,
            };
            let agent = serve(spec).map_err(|e| match e {
                AgentError::Bind { .. } => HarnessError::Environment(e.to_string()),
                other => HarnessError::Environment(other.to_string()),
            })?;
            endpoints.push(TransceiverId::new(&id, PORT_NAME).expect("valid id"));
            agents.push(agent);
        }
        Ok(Testbed { agents, clock, endpoints })
    }

    pub fn endpoints(&self) -> &[TransceiverId] {
        &self.endpoints
    }

    pub fn clock(&self) -> Arc<SimClock> {
        self.clock.clone()
    }

    pub fn agents(&self) -> &[AgentHandle] {
        &self.agents
    }

    pub fn controller_config(&self, db_path: &Path, allocator: AllocatorConfig, schedule: ExplorationSchedule) -> ControllerConfig {
        ControllerConfig {
            endpoints: self
                .agents
                .iter()
                .map(|a| EndpointConfig { whitebox_id: a.whitebox_id().to_string(), addr: a.addr() })
                .collect(),
            allocator,
            schedule,
            db_path: db_path.to_path_buf(),
            reconnect_per_request: false,
            timeout_ms: 30_000,
        }
    }

    /// Simulated time elapsed since boot.
    pub fn elapsed_s(&self) -> f64 {
        self.clock.settle().as_secs_f64()
    }
}

#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub pluggables: usize,
    pub episodes: u64,
    pub dataset: DatasetSource,
    pub backend: Backend,
    pub schedule: ExplorationSchedule,
    pub seed: u64,
    pub clock: ClockMode,
    pub out_dir: PathBuf,
}

impl TrainSpec {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        TrainSpec {
            pluggables: DEFAULT_PLUGGABLES,
            episodes: DEFAULT_EPISODES,
            dataset: DatasetSource::default(),
            backend: Backend::Tabular,
            schedule: ExplorationSchedule::default(),
            seed: 0,
            clock: ClockMode::Logical,
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub episode: u64,
    pub feedback_s: f64,
    pub moving_avg_200: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub episodes: u64,
    pub pluggables: usize,
    pub backend: Backend,
    pub final_moving_avg: Option<f64>,
    pub dataset_mean: f64,
    pub best_slot_mean: f64,
    pub final_epsilon: f64,
    pub sim_time_s: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub curve: Vec<TrainRow>,
    pub summary: TrainSummary,
    pub allocator: Allocator,
}

pub const TRAIN_CSV: &str = "train.csv";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_DB: &str = "feedback.jsonl";
pub const OPERATE_CSV: &str = "operate.csv";
pub const OPERATE_SUMMARY: &str = "operate_summary.json";
pub const OPERATE_DB: &str = "operate_feedback.jsonl";
pub const SCALE_CSV: &str = "scale.csv";

fn prepare_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(out_err(dir))
}

fn fresh_db(path: &Path) -> Result<(), HarnessError> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(out_err(path)(e)),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    std::fs::write(path, text).map_err(out_err(path))
}

fn first_failure(results: Vec<Result<RequestOutcome, ControllerError>>) -> Result<Vec<RequestOutcome>, HarnessError> {
    results.into_iter().map(|r| r.map_err(HarnessError::from)).collect()
}

/// Trailing mean over at most `window` values, one per input.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn run_train(spec: &TrainSpec) -> Result<TrainReport, HarnessError> {
    let fit = spec.dataset.load()?;
    let (dataset_mean, best_slot_mean) = dataset_means(&fit.stats());
    prepare_dir(&spec.out_dir)?;
    let db_path = spec.out_dir.join(TRAIN_DB);
    fresh_db(&db_path)?;

    let testbed = Testbed::boot(
        &fit,
        spec.pluggables,
        spec.clock,
        seeds::derive(spec.seed, seeds::TRAIN_LASERS),
        Some(&spec.out_dir.join("logs")),
    )?;
    let requests = generate_requests(testbed.endpoints(), spec.episodes, seeds::derive(spec.seed, seeds::TRAIN_REQUESTS))?;
    let config = AllocatorConfig {
        backend: spec.backend,
        seed: seeds::derive(spec.seed, seeds::ALLOCATOR),
        ..AllocatorConfig::default()
    };
    let allocator = Allocator::new(config, spec.schedule, testbed.endpoints());
    let mut controller =
        PacketController::new(&testbed.controller_config(&db_path, config, spec.schedule), allocator, Some(testbed.clock()))?;
    let outcomes = first_failure(controller.run_scenario(&requests))?;
    let sim_time_s = testbed.elapsed_s();
    drop(testbed);

    let feedback: Vec<f64> = outcomes.iter().map(|o| (o.ingress_time_s + o.egress_time_s) / 2.0).collect();
    let avg = moving_average(&feedback, MOVING_AVERAGE_WINDOW);
    let curve: Vec<TrainRow> = outcomes
        .iter()
        .zip(feedback.iter().zip(&avg))
        .map(|(o, (&f, &m))| TrainRow { episode: o.episode + 1, feedback_s: f, moving_avg_200: m })
        .collect();

    let csv_path = spec.out_dir.join(TRAIN_CSV);
    write_train_csv(&csv_path, &curve)?;
    let allocator = controller.into_allocator();
    let model_path = spec.out_dir.join(MODEL_FILE);
    std::fs::write(&model_path, allocator.save() + "\n").map_err(out_err(&model_path))?;
    let summary = TrainSummary {
        episodes: spec.episodes,
        pluggables: spec.pluggables,
        backend: spec.backend,
        final_moving_avg: avg.last().copied(),
        dataset_mean,
        best_slot_mean,
        final_epsilon: allocator.epsilon(),
        sim_time_s,
    };
    write_json(&spec.out_dir.join(TRAIN_SUMMARY), &summary)?;
    Ok(TrainReport { curve, summary, allocator })
}

fn write_train_csv(path: &Path, rows: &[TrainRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(out_err(path))?;
    w.write_record(["episode", "feedback_s", "moving_avg_200"]).map_err(out_err(path))?;
    for r in rows {
        w.write_record([r.episode.to_string(), format!("{:.6}", r.feedback_s), format!("{:.6}", r.moving_avg_200)])
            .map_err(out_err(path))?;
    }
    w.flush().map_err(out_err(path))
}

#[derive(Debug, Clone)]
pub struct OperateSpec {
    pub pluggables: usize,
    pub requests: u64,
    pub dataset: DatasetSource,
    pub model_path: PathBuf,
    /// Exploration rate; the schedule's floor when absent.
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub clock: ClockMode,
    pub out_dir: PathBuf,
}

impl OperateSpec {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        let out_dir = out_dir.into();
        OperateSpec {
            pluggables: DEFAULT_PLUGGABLES,
            requests: DEFAULT_REQUESTS,
            dataset: DatasetSource::default(),
            model_path: out_dir.join(MODEL_FILE),
            epsilon: None,
            seed: 0,
            clock: ClockMode::Logical,
            out_dir,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperateSummary {
    pub requests: u64,
    pub pluggables: usize,
    pub epsilon: f64,
    pub mean_feedback_s: f64,
    pub mean_latency_s: f64,
    pub per_pluggable_mean: BTreeMap<String, f64>,
    pub dataset_mean: f64,
    pub best_slot_mean: f64,
    pub improvement_fraction: f64,
    pub sim_time_s: f64,
}

#[derive(Debug)]
pub struct OperateReport {
    pub outcomes: Vec<RequestOutcome>,
    pub summary: OperateSummary,
}

pub fn run_operate(spec: &OperateSpec) -> Result<OperateReport, HarnessError> {
    let text = match std::fs::read_to_string(&spec.model_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(HarnessError::ModelNotFound(spec.model_path.clone())),
        Err(e) => return Err(out_err(&spec.model_path)(e)),
    };
    let allocator = Allocator::load(&text)?;
    let epsilon = spec.epsilon.unwrap_or(allocator.schedule().epsilon_min);
    let fit = spec.dataset.load()?;
    let (dataset_mean, best_slot_mean) = dataset_means(&fit.stats());
    prepare_dir(&spec.out_dir)?;
    let db_path = spec.out_dir.join(OPERATE_DB);
    fresh_db(&db_path)?;

    let testbed = Testbed::boot(
        &fit,
        spec.pluggables,
        spec.clock,
        seeds::derive(spec.seed, seeds::OPERATE_LASERS),
        Some(&spec.out_dir.join("logs")),
    )?;
    let requests =
        generate_requests(testbed.endpoints(), spec.requests, seeds::derive(spec.seed, seeds::OPERATE_REQUESTS))?;
    let config = testbed.controller_config(&db_path, *allocator.config(), *allocator.schedule());
    let mut controller = PacketController::new(&config, allocator, Some(testbed.clock()))?;
    controller.set_epsilon_override(Some(epsilon));
    let outcomes = first_failure(controller.run_scenario(&requests))?;
    let sim_time_s = testbed.elapsed_s();
    drop(controller);
    drop(testbed);

    let csv_path = spec.out_dir.join(OPERATE_CSV);
    write_operate_csv(&csv_path, &outcomes)?;

    let records = feedback_db::load(&db_path)?;
    let mut per: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for r in &records {
        let e = per.entry(format!("{}/{}", r.whitebox, r.port)).or_default();
        e.0 += r.config_time_s;
        e.1 += 1;
    }
    let per_pluggable_mean = per.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let n = outcomes.len().max(1) as f64;
    let mean_feedback_s = outcomes.iter().map(|o| (o.ingress_time_s + o.egress_time_s) / 2.0).sum::<f64>() / n;
    let mean_latency_s = outcomes.iter().map(|o| o.latency_s).sum::<f64>() / n;
    let summary = OperateSummary {
        requests: spec.requests,
        pluggables: spec.pluggables,
        epsilon,
        mean_feedback_s,
        mean_latency_s,
        per_pluggable_mean,
        dataset_mean,
        best_slot_mean,
        improvement_fraction: 1.0 - mean_feedback_s / dataset_mean,
        sim_time_s,
    };
    write_json(&spec.out_dir.join(OPERATE_SUMMARY), &summary)?;
    Ok(OperateReport { outcomes, summary })
}

fn write_operate_csv(path: &Path, outcomes: &[RequestOutcome]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(out_err(path))?;
    w.write_record(["request_id", "slot", "ingress_time_s", "egress_time_s", "latency_s"]).map_err(out_err(path))?;
    for o in outcomes {
        w.write_record([
            o.request_id.to_string(),
            o.slot.index().to_string(),
            format!("{:.6}", o.ingress_time_s),
            format!("{:.6}", o.egress_time_s),
            format!("{:.6}", o.latency_s),
        ])
        .map_err(out_err(path))?;
    }
    w.flush().map_err(out_err(path))
}

#[derive(Debug, Clone)]
pub struct ScaleSpec {
    pub counts: Vec<usize>,
    pub episodes: u64,
    pub episodes_per_pluggable: u64,
    pub requests: u64,
    pub dataset: DatasetSource,
    pub backend: Backend,
    pub schedule: ExplorationSchedule,
    pub seed: u64,
    pub clock: ClockMode,
    pub out_dir: PathBuf,
}

impl ScaleSpec {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        ScaleSpec {
            counts: DEFAULT_SCALE_COUNTS.to_vec(),
            episodes: DEFAULT_EPISODES,
            episodes_per_pluggable: SCALE_EPISODES_PER_PLUGGABLE,
            requests: DEFAULT_REQUESTS,
            dataset: DatasetSource::default(),
            backend: Backend::Tabular,
            schedule: ExplorationSchedule::default(),
            seed: 0,
            clock: ClockMode::Logical,
            out_dir: out_dir.into(),
        }
    }

    pub fn episodes_for(&self, pluggables: usize) -> u64 {
        self.episodes.max(self.episodes_per_pluggable * pluggables as u64)
    }

    pub fn count_dir(&self, pluggables: usize) -> PathBuf {
        self.out_dir.join("scale").join(format!("p{pluggables}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub pluggables: usize,
    pub avg_feedback_s: f64,
    pub avg_latency_s: f64,
    /// Simulated seconds spent training and operating.
    pub wall_time_s: f64,
}

pub fn run_scale(spec: &ScaleSpec) -> Result<Vec<ScaleRow>, HarnessError> {
    prepare_dir(&spec.out_dir)?;
    let mut rows = Vec::new();
    for &count in &spec.counts {
        let dir = spec.count_dir(count);
        let train = run_train(&TrainSpec {
            pluggables: count,
            episodes: spec.episodes_for(count),
            dataset: spec.dataset.clone(),
            backend: spec.backend,
            schedule: spec.schedule,
            seed: spec.seed,
            clock: spec.clock,
            out_dir: dir.clone(),
        })?;
        let operate = run_operate(&OperateSpec {
            pluggables: count,
            requests: spec.requests,
            dataset: spec.dataset.clone(),
            model_path: dir.join(MODEL_FILE),
            epsilon: None,
            seed: spec.seed,
            clock: spec.clock,
            out_dir: dir,
        })?;
        log::info!(
            "scale: {count} pluggables, operating mean {:.6} s",
            operate.summary.mean_feedback_s
        );
        rows.push(ScaleRow {
            pluggables: count,
            avg_feedback_s: operate.summary.mean_feedback_s,
            avg_latency_s: operate.summary.mean_latency_s,
            wall_time_s: train.summary.sim_time_s + operate.summary.sim_time_s,
        });
    }
    let path = spec.out_dir.join(SCALE_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(out_err(&path))?;
    w.write_record(["pluggables", "avg_feedback_s", "avg_latency_s", "wall_time_s"]).map_err(out_err(&path))?;
    for r in &rows {
        w.write_record([
            r.pluggables.to_string(),
            format!("{:.6}", r.avg_feedback_s),
            format!("{:.6}", r.avg_latency_s),
            format!("{:.6}", r.wall_time_s),
        ])
        .map_err(out_err(&path))?;
    }
    w.flush().map_err(out_err(&path))?;
    Ok(rows)
}
