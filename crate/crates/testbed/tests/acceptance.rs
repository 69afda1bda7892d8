//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use optislot::agent::{serve, AgentSpec};
use optislot::client::{EditResult, NetconfClient};
use optislot::clock::SimClock;
use optislot::harness::{
    run_operate, run_scale, run_train, DatasetSource, OperateSpec, ScaleSpec, TrainSpec, MODEL_FILE, OPERATE_CSV,
    SCALE_CSV, TRAIN_CSV,
};
use optislot::sim::{CmisLog, PortSpec, DEFAULT_EPOCH};
use optislot_core::allocator::Backend;
use optislot_core::cmis::{fit_lognormal, pair_events, parse_log, synthesize_dataset, SynthSpec};
use optislot_core::slot::{frequency_to_slot, FIRST_FREQUENCY_GHZ, LAST_FREQUENCY_GHZ};
use optislot_core::{
    Allocator, AllocatorConfig, ExplorationSchedule, FrequencySlot, LaserModel, SlotStatistics, TransceiverId,
};
use tempfile::TempDir;

const SEED: u64 = 0;
const LISTING: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cmis_listing.log");

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Suite {
    work: TempDir,
    failures: usize,
    /// Operating mean of the tabular run from criterion 6.
    tabular_mean: Option<f64>,
}

impl Suite {
    fn check(&mut self, n: u32, what: &str, limit: Duration, f: impl FnOnce(&mut Suite) -> Outcome) {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(self)))
            .unwrap_or_else(|p| Err(panic_message(p)));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("criterion {n:>2} {tag}  {what}: {detail} [{elapsed:.2?}]");
        if result.is_err() {
            self.failures += 1;
        }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.work.path().join(name)
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn csv_rows(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            rec.iter().map(|v| v.parse::<f64>().map_err(|e| format!("{v}: {e}"))).collect()
        })
        .collect()
}

/// Slot means of the acceptance dataset, read back from its fit parameters.
fn acceptance_means() -> Vec<f64> {
    let fit = DatasetSource::default().load().unwrap();
    let doc: serde_json::Value = serde_json::to_value(&fit).unwrap();
    doc["slots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| {
            let (mu, sigma) = (s["mu"].as_f64().unwrap(), s["sigma"].as_f64().unwrap());
            (mu + sigma * sigma / 2.0).exp()
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn slot_arithmetic(_: &mut Suite) -> Outcome {
    for i in 0..49usize {
        let want = 191_300 + 100 * i as u32;
        let slot = FrequencySlot::new(i).map_err(|e| e.to_string())?;
        ensure!(slot.frequency_ghz() == want, "slot {i} -> {}", slot.frequency_ghz());
        ensure!(frequency_to_slot(want) == Ok(slot), "{want} GHz does not map back to slot {i}");
    }
    ensure!(frequency_to_slot(192_500).map(|s| s.index()) == Ok(12), "192500 GHz is not slot 12");
    ensure!((FIRST_FREQUENCY_GHZ, LAST_FREQUENCY_GHZ) == (191_300, 196_100), "grid bounds");
    for off in [191_200, 191_350, 196_200, 0] {
        ensure!(frequency_to_slot(off).is_err(), "{off} GHz accepted");
    }
    ensure!(FrequencySlot::new(49).is_err(), "slot 49 accepted");
    Ok("49 slots round-trip, 12 <-> 192500 GHz, bounds 191300..196100".into())
}

/// Seconds since midnight of an `HH:MM:SS.ffffff` field, in microseconds.
fn oracle_micros(stamp: &str) -> i64 {
    let (hms, frac) = stamp.split_once('.').unwrap();
    let p: Vec<i64> = hms.split(':').map(|x| x.parse().unwrap()).collect();
    ((p[0] * 60 + p[1]) * 60 + p[2]) * 1_000_000 + frac.parse::<i64>().unwrap()
}

fn golden_listing(_: &mut Suite) -> Outcome {
    let text = std::fs::read_to_string(LISTING).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text.lines().collect();
    let stamp_before = |marker: &str| {
        let i = lines.iter().position(|l| l.contains(marker)).unwrap();
        lines[..i].iter().rev().find(|l| l.starts_with("Jun")).unwrap().split_whitespace().nth(2).unwrap()
    };
    let oracle = (oracle_micros(stamp_before("configured laser frequency"))
        - oracle_micros(stamp_before("force Datapath reinit"))) as f64
        / 1e6;

    let events = parse_log(&text).map_err(|e| e.to_string())?;
    let pairing = pair_events(&events).map_err(|e| e.to_string())?;
    ensure!(pairing.measurements.len() == 1, "{} measurements", pairing.measurements.len());
    let m = &pairing.measurements[0];
    ensure!(m.port == "Ethernet0" && m.slot.index() == 12, "{} slot {}", m.port, m.slot.index());
    ensure!((m.config_time_s - oracle).abs() <= 1e-6, "{} vs oracle {oracle}", m.config_time_s);
    ensure!((m.config_time_s - 3.513673).abs() <= 1e-6, "{}", m.config_time_s);
    Ok(format!("one measurement, Ethernet0 slot 12, {:.6} s", m.config_time_s))
}

/// SplitMix64 uniform in (0, 1) and Box-Muller normals.
struct OracleRng(u64);

impl OracleRng {
    fn uniform(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64 + 0.5 / (1u64 << 53) as f64
    }

    fn normal(&mut self) -> f64 {
        let (u, v) = (self.uniform(), self.uniform());
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}

fn lognormal_fit(_: &mut Suite) -> Outcome {
    const N: usize = 1_000_000;
    let slot = FrequencySlot::new(0).unwrap();
    let mut notes = Vec::new();
    for (m, s) in [(4.0, 1.0), (4.34, 0.5)] {
        let fit = fit_lognormal(&SlotStatistics { slot, mean_s: m, std_s: s, count: 2 }).map_err(|e| e.to_string())?;
        let sigma2 = (1.0 + (s / m) * (s / m)).ln();
        ensure!((fit.sigma - sigma2.sqrt()).abs() < 1e-12, "sigma {}", fit.sigma);
        ensure!((fit.mu - (m.ln() - sigma2 / 2.0)).abs() < 1e-12, "mu {}", fit.mu);

        let mut model = LaserModel::new(vec![fit; 49], 42).map_err(|e| e.to_string())?;
        let drawn: Vec<f64> = (0..N).map(|_| model.sample_config_time(slot)).collect();
        let mut rng = OracleRng(7);
        let oracle: Vec<f64> = (0..N).map(|_| (fit.mu + fit.sigma * rng.normal()).exp()).collect();
        for (label, xs) in [("model", &drawn), ("oracle", &oracle)] {
            let (em, es) = ((mean(xs) - m).abs() / m, (population_std(xs) - s).abs() / s);
            ensure!(em < 0.01 && es < 0.02, "({m}, {s}) {label}: mean err {em:.4}, std err {es:.4}");
        }
        notes.push(format!(
            "({m}, {s}): mean {:.4}, std {:.4}",
            mean(&drawn),
            population_std(&drawn)
        ));
    }
    Ok(notes.join("; "))
}

fn q_update(_: &mut Suite) -> Outcome {
    let a = TransceiverId::new("wb0", "Ethernet0").unwrap();
    let slot = FrequencySlot::new(5).unwrap();
    let mut alloc = Allocator::new(AllocatorConfig::default(), ExplorationSchedule::default(), std::slice::from_ref(&a));
    alloc.observe(&a, slot, 4.34).map_err(|e| e.to_string())?;
    let q = alloc.model().values(&a)[slot.index()];
    ensure!(q == -0.434, "q = {q}");

    let halving = (2f64.ln() / -(0.9f64.ln())).ceil() as usize;
    ensure!(halving == 7, "halving period {halving}");
    let mut alloc = Allocator::new(AllocatorConfig::default(), ExplorationSchedule::default(), std::slice::from_ref(&a));
    let mut errors = Vec::new();
    for k in 0..=200 {
        let e = alloc.model().values(&a)[slot.index()] + 4.0;
        let want = 4.0 * 0.9f64.powi(k);
        ensure!((e - want).abs() <= 1e-12, "step {k}: error {e} vs {want}");
        errors.push(e.abs());
        alloc.observe(&a, slot, 4.0).map_err(|e| e.to_string())?;
    }
    for k in 0..errors.len() - halving {
        ensure!(errors[k + halving] <= errors[k] / 2.0 + 1e-12, "no halving from step {k}");
    }
    Ok(format!("q = {q}, error halves every {halving} steps"))
}

fn soak(_: &mut Suite) -> Outcome {
    let fit = DatasetSource::default().load().map_err(|e| e.to_string())?;
    let model = fit.laser_model(11).map_err(|e| e.to_string())?;
    let log = Arc::new(CmisLog::capturing());
    let agent = serve(AgentSpec {
        whitebox_id: "wb0".into(),
        listen: "127.0.0.1:0".parse().unwrap(),
        ports: vec![PortSpec { name: "Ethernet0".into(), model }],
        clock: Arc::new(SimClock::logical()),
        log: log.clone(),
        epoch: DEFAULT_EPOCH,
    })
    .map_err(|e| e.to_string())?;
    let timeout = Some(Duration::from_secs(10));
    let mut client = NetconfClient::connect(agent.addr(), timeout).map_err(|e| e.to_string())?;
    let mut received = Vec::new();
    for i in 0..1000 {
        let freq = 191_300 + 100 * (i * 17 % 49) as u32;
        match client.edit_config("Ethernet0", freq).map_err(|e| format!("round trip {i}: {e}"))? {
            EditResult::Configured { config_time_s } => received.push(config_time_s),
            other => return Err(format!("round trip {i}: {other:?}")),
        }
        if i == 400 {
            let mut bad = NetconfClient::connect(agent.addr(), timeout).map_err(|e| e.to_string())?;
            bad.send_raw(b"<rpc message-id=\"1\"><edit-config>]]>]]>").map_err(|e| e.to_string())?;
            ensure!(bad.receive().is_err(), "malformed session stayed open");
        }
    }
    // what the agent logged is what the client saw, to the microsecond
    let logged = pair_events(&parse_log(&log.captured().join("\n")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?
        .measurements;
    ensure!(logged.len() == 1000, "{} logged configurations", logged.len());
    for (i, (got, m)) in received.iter().zip(&logged).enumerate() {
        ensure!(format!("{got:.6}") == format!("{:.6}", m.config_time_s), "round trip {i}: {got} vs {}", m.config_time_s);
    }
    let tele = agent.telemetry();
    ensure!(
        tele.iter().zip(&received[900..]).all(|(t, r)| t.config_time_s == *r),
        "telemetry ring disagrees with replies"
    );
    Ok("1000 edit-configs, 0 protocol errors, malformed session closed alone".into())
}

fn train_operate(dir: &Path, backend: Backend) -> Result<(), String> {
    let mut train = TrainSpec::new(dir);
    train.backend = backend;
    train.seed = SEED;
    run_train(&train).map_err(|e| e.to_string())?;
    let mut op = OperateSpec::new(dir);
    op.seed = SEED;
    run_operate(&op).map_err(|e| e.to_string())?;
    Ok(())
}

fn operating_mean(dir: &Path) -> Result<f64, String> {
    let rows = csv_rows(&dir.join(OPERATE_CSV))?;
    ensure!(rows.len() == 500, "{} operating requests", rows.len());
    Ok(mean(&rows.iter().map(|r| (r[2] + r[3]) / 2.0).collect::<Vec<_>>()))
}

fn improvement(suite: &mut Suite) -> Outcome {
    let means = acceptance_means();
    ensure!(means.len() == 49, "{} slot means", means.len());
    let baseline = mean(&means);
    let best_pair = means.iter().map(|m| (m + m) / 2.0).fold(f64::INFINITY, f64::min);
    let ratio = best_pair / baseline;
    ensure!((0.70..=0.80).contains(&ratio), "dataset min/mean {ratio:.3}");
    let stats = synthesize_dataset(&SynthSpec::ACCEPTANCE).stats;
    ensure!(stats.iter().all(|s| (s.std_s / s.mean_s - 0.1).abs() < 1e-12), "std is not 10% of mean");

    let dir = suite.dir("tabular");
    train_operate(&dir, Backend::Tabular)?;
    let op = operating_mean(&dir)?;
    suite.tabular_mean = Some(op);
    let below = 1.0 - op / baseline;
    ensure!(below >= 0.15, "operating mean {op:.4} s only {:.1}% below {baseline:.4} s", 100.0 * below);
    ensure!(op <= 1.05 * best_pair, "operating mean {op:.4} s vs best pair {best_pair:.4} s");
    Ok(format!(
        "operating mean {op:.4} s, {:.1}% below baseline {baseline:.4} s, {:.1}% above best pair {best_pair:.4} s",
        100.0 * below,
        100.0 * (op / best_pair - 1.0)
    ))
}

fn steady_state(suite: &mut Suite) -> Outcome {
    let dir = suite.dir("tabular");
    let rows = csv_rows(&dir.join(TRAIN_CSV))?;
    ensure!(rows.len() == 3000, "{} training rows", rows.len());
    ensure!(rows[2499][0] == 2500.0 && rows[2999][0] == 3000.0, "episode numbering");
    let (a, b) = (rows[2499][2], rows[2999][2]);
    let change = (b - a).abs() / a;
    ensure!(change < 0.02, "moving average {a:.4} -> {b:.4} ({:.2}%)", 100.0 * change);

    let oracle = 0.999002f64.powi(3000).max(0.05);
    let model = Allocator::load(&std::fs::read_to_string(dir.join(MODEL_FILE)).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let eps = model.epsilon();
    ensure!(model.episode() == 3000, "model at episode {}", model.episode());
    ensure!((eps - 0.05).abs() <= 0.001 && (eps - oracle).abs() < 1e-12, "epsilon(3000) = {eps}");
    Ok(format!("moving average {a:.4} -> {b:.4} s ({:.2}%), epsilon(3000) = {eps:.4}", 100.0 * change))
}

fn scale_spec(dir: &Path) -> ScaleSpec {
    let mut spec = ScaleSpec::new(dir);
    spec.seed = SEED;
    spec
}

fn scaling(suite: &mut Suite) -> Outcome {
    let spec = scale_spec(&suite.dir("scale"));
    run_scale(&spec).map_err(|e| e.to_string())?;
    let rows = csv_rows(&spec.out_dir.join(SCALE_CSV))?;
    let counts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    ensure!(counts == [2.0, 4.0, 8.0, 16.0], "counts {counts:?}");
    let fb: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let spread = fb.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / fb.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure!(spread <= 1.10, "avg feedback {fb:?} spread {spread:.3}");

    let resolution = SimClock::logical().resolution_s();
    for row in &rows {
        let n = row[0] as usize;
        let ops = csv_rows(&spec.count_dir(n).join(OPERATE_CSV))?;
        for o in &ops {
            ensure!((o[4] - o[2].max(o[3])).abs() <= resolution, "{n} pluggables, request {}: latency {}", o[0], o[4]);
            ensure!(o[4] < o[2] + o[3], "{n} pluggables, request {}: sequential latency", o[0]);
        }
        let want = mean(&ops.iter().map(|o| o[2].max(o[3])).collect::<Vec<_>>());
        ensure!((row[2] - want).abs() <= resolution, "{n} pluggables: avg latency {} vs {want}", row[2]);
    }
    Ok(format!(
        "avg feedback {} s, max/min {spread:.3}, latency = mean max(t_in, t_eg)",
        fb.iter().map(|f| format!("{f:.4}")).collect::<Vec<_>>().join("/")
    ))
}

fn fnn_parity(suite: &mut Suite) -> Outcome {
    let dir = suite.dir("fnn");
    train_operate(&dir, Backend::Fnn)?;
    let fnn = operating_mean(&dir)?;
    let tab = match suite.tabular_mean {
        Some(m) => m,
        None => operating_mean(&suite.dir("tabular"))?,
    };
    let gap = (fnn / tab - 1.0).abs();
    ensure!(gap <= 0.10, "fnn {fnn:.4} s vs tabular {tab:.4} s");
    Ok(format!("fnn {fnn:.4} s vs tabular {tab:.4} s ({:.1}%)", 100.0 * gap))
}

fn determinism(suite: &mut Suite) -> Outcome {
    let again = suite.dir("tabular-again");
    train_operate(&again, Backend::Tabular)?;
    let first_scale = scale_spec(&suite.dir("scale"));
    let second_scale = scale_spec(&suite.dir("scale-again"));
    run_scale(&second_scale).map_err(|e| e.to_string())?;

    let mut pairs = vec![
        (suite.dir("tabular").join(TRAIN_CSV), again.join(TRAIN_CSV)),
        (suite.dir("tabular").join(OPERATE_CSV), again.join(OPERATE_CSV)),
        (first_scale.out_dir.join(SCALE_CSV), second_scale.out_dir.join(SCALE_CSV)),
    ];
    for n in &first_scale.counts {
        for f in [TRAIN_CSV, OPERATE_CSV] {
            pairs.push((first_scale.count_dir(*n).join(f), second_scale.count_dir(*n).join(f)));
        }
    }
    for (a, b) in &pairs {
        let (x, y) = (std::fs::read(a).map_err(|e| e.to_string())?, std::fs::read(b).map_err(|e| e.to_string())?);
        ensure!(!x.is_empty() && x == y, "{} differs from {}", a.display(), b.display());
    }
    Ok(format!("{} CSV files byte-identical across reruns", pairs.len()))
}

fn main() {
    let mut suite = Suite { work: TempDir::new().expect("temp dir"), failures: 0, tabular_mean: None };
    let s = |secs: u64| Duration::from_secs(secs);
    suite.check(1, "slot arithmetic", Duration::from_millis(1), slot_arithmetic);
    suite.check(2, "CMIS golden listing", Duration::from_millis(10), golden_listing);
    suite.check(3, "log-normal fit", s(5), lognormal_fit);
    suite.check(4, "Q-update arithmetic", s(1), q_update);
    suite.check(5, "protocol soak", s(10), soak);
    suite.check(6, "operating improvement", s(60), improvement);
    suite.check(7, "training steady state", s(60), steady_state);
    suite.check(8, "scaling", s(300), scaling);
    suite.check(9, "fnn parity", s(180), fnn_parity);
    suite.check(10, "determinism", s(420), determinism);
    if suite.failures > 0 {
        println!("{} criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
