//! Command-line surface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use optislot_core::allocator::Backend;
use optislot_core::cmis::{SynthSpec, DEFAULT_NOISE_FRACTION};
use optislot_core::laser::FitDocument;
use optislot_core::{Allocator, ExplorationSchedule, FrequencySlot};

use crate::agent::{serve, WhiteboxConfig};
use crate::clock::ClockMode;
use crate::dataset::{process_log, write_fit, write_measurements_csv, write_stats_csv};
use crate::harness::{
    run_operate, run_scale, run_train, DatasetSource, OperateSpec, ScaleSpec, TrainSpec, DEFAULT_EPISODES,
    DEFAULT_PLUGGABLES, DEFAULT_REQUESTS, MODEL_FILE, SCALE_EPISODES_PER_PLUGGABLE,
};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "optislot", version, about = "Laser frequency slot allocation testbed")]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// `logical` or `scaled:<factor>`.
    #[arg(long, global = true)]
    pub clock: Option<ClockMode>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a CMIS syslog into measurements, per-slot statistics and a fit.
    ParseLogs {
        file: PathBuf,
        /// Augmented copies per real measurement.
        #[arg(long, default_value_t = 0)]
        augment: usize,
        #[arg(long, default_value_t = DEFAULT_NOISE_FRACTION)]
        noise: f64,
    },
    /// Write a synthetic per-slot dataset.
    SynthDataset {
        #[arg(long, default_value_t = SynthSpec::ACCEPTANCE.mean_min_s)]
        mean_min: f64,
        #[arg(long, default_value_t = SynthSpec::ACCEPTANCE.mean_max_s)]
        mean_max: f64,
        #[arg(long, default_value_t = SynthSpec::ACCEPTANCE.std_fraction)]
        std_fraction: f64,
        #[arg(long, default_value_t = SynthSpec::ACCEPTANCE.seed)]
        dataset_seed: u64,
    },
    Train(TrainArgs),
    Operate(OperateArgs),
    Scale(ScaleArgs),
    #[command(subcommand)]
    Agent(AgentCommand),
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Fit document to simulate; the built-in synthetic dataset otherwise.
    #[arg(long)]
    pub fit: Option<PathBuf>,
}

impl DatasetArgs {
    fn source(&self) -> DatasetSource {
        match &self.fit {
            Some(p) => DatasetSource::FitFile(p.clone()),
            None => DatasetSource::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = ExplorationSchedule::default().epsilon0)]
    pub epsilon0: f64,
    #[arg(long, default_value_t = ExplorationSchedule::default().epsilon_min)]
    pub epsilon_min: f64,
    #[arg(long, default_value_t = ExplorationSchedule::default().decay)]
    pub decay: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = DEFAULT_PLUGGABLES)]
    pub pluggables: usize,
    #[arg(long, default_value_t = DEFAULT_EPISODES)]
    pub episodes: u64,
    #[arg(long, default_value = "tabular")]
    pub backend: Backend,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Args)]
pub struct OperateArgs {
    #[arg(long, default_value_t = DEFAULT_PLUGGABLES)]
    pub pluggables: usize,
    #[arg(long, default_value_t = DEFAULT_REQUESTS)]
    pub requests: u64,
    /// Trained model; `<out-dir>/model.json` by default.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Fixed exploration rate; the model's epsilon floor by default.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    pub dataset: DatasetArgs,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_EPISODES)]
    pub episodes: u64,
    #[arg(long, default_value_t = SCALE_EPISODES_PER_PLUGGABLE)]
    pub episodes_per_pluggable: u64,
    #[arg(long, default_value_t = DEFAULT_REQUESTS)]
    pub requests: u64,
    #[arg(long, default_value = "tabular")]
    pub backend: Backend,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Subcommand)]
pub enum AgentCommand {
    /// Run one whitebox agent until killed.
    Serve { config: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Print a model document's schedule and greedy slots.
    Show { file: PathBuf },
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Parse `args` and run; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn schedule(args: &ScheduleArgs) -> Result<ExplorationSchedule, BoxError> {
    Ok(ExplorationSchedule::new(args.epsilon0, args.epsilon_min, args.decay)?)
}

fn create_dir(dir: &Path) -> Result<(), BoxError> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()).into())
}

pub fn execute(cli: Cli) -> Result<(), BoxError> {
    let clock = cli.clock.unwrap_or_default();
    let out = cli.out_dir;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::ParseLogs { file, augment, noise } => {
            let text = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let ds = process_log(&text, augment, noise, cli.seed)?;
            create_dir(&out)?;
            write_measurements_csv(&out.join("measurements.csv"), &ds.measurements)?;
            write_stats_csv(&out.join("stats.csv"), &ds.stats)?;
            write_fit(&out.join("fit.json"), &ds.fit)?;
            writeln!(
                stdout,
                "{} measurements over {} slots ({} unmatched reinits) -> {}",
                ds.measurements.len(),
                ds.stats.len(),
                ds.unmatched_reinits,
                out.display()
            )?;
        }
        Command::SynthDataset { mean_min, mean_max, std_fraction, dataset_seed } => {
            let spec = SynthSpec { mean_min_s: mean_min, mean_max_s: mean_max, std_fraction, seed: dataset_seed };
            let ds = optislot_core::cmis::synthesize_dataset(&spec);
            let fit = FitDocument::from_stats(&ds.stats)?;
            create_dir(&out)?;
            write_stats_csv(&out.join("stats.csv"), &ds.stats)?;
            write_fit(&out.join("fit.json"), &fit)?;
            writeln!(
                stdout,
                "49 slots, mean of means {:.6} s, best {:.6} s -> {}",
                ds.overall_mean_s,
                ds.min_mean_s,
                out.display()
            )?;
        }
        Command::Train(a) => {
            let report = run_train(&TrainSpec {
                pluggables: a.pluggables,
                episodes: a.episodes,
                dataset: a.dataset.source(),
                backend: a.backend,
                schedule: schedule(&a.schedule)?,
                seed: cli.seed,
                clock,
                out_dir: out.clone(),
            })?;
            let s = &report.summary;
            match s.final_moving_avg {
                Some(avg) => writeln!(
                    stdout,
                    "{} episodes: moving average {avg:.6} s (dataset mean {:.6} s, best slot {:.6} s)",
                    s.episodes, s.dataset_mean, s.best_slot_mean
                )?,
                None => writeln!(stdout, "0 episodes: untrained model written")?,
            }
        }
        Command::Operate(a) => {
            let report = run_operate(&OperateSpec {
                pluggables: a.pluggables,
                requests: a.requests,
                dataset: a.dataset.source(),
                model_path: a.model.unwrap_or_else(|| out.join(MODEL_FILE)),
                epsilon: a.epsilon,
                seed: cli.seed,
                clock,
                out_dir: out.clone(),
            })?;
            let s = &report.summary;
            writeln!(
                stdout,
                "{} requests: mean {:.6} s, latency {:.6} s, improvement {:.1}% over {:.6} s",
                s.requests,
                s.mean_feedback_s,
                s.mean_latency_s,
                100.0 * s.improvement_fraction,
                s.dataset_mean
            )?;
        }
        Command::Scale(a) => {
            let rows = run_scale(&ScaleSpec {
                counts: a.counts,
                episodes: a.episodes,
                episodes_per_pluggable: a.episodes_per_pluggable,
                requests: a.requests,
                dataset: a.dataset.source(),
                backend: a.backend,
                schedule: schedule(&a.schedule)?,
                seed: cli.seed,
                clock,
                out_dir: out.clone(),
            })?;
            writeln!(stdout, "pluggables  avg_feedback_s  avg_latency_s")?;
            for r in rows {
                writeln!(stdout, "{:>10}  {:>14.6}  {:>13.6}", r.pluggables, r.avg_feedback_s, r.avg_latency_s)?;
            }
        }
        Command::Agent(AgentCommand::Serve { config }) => {
            let mut doc = WhiteboxConfig::load(&config)?;
            if let Some(mode) = cli.clock {
                doc.clock = mode;
            }
            let base = config.parent().unwrap_or(Path::new("."));
            let handle = serve(doc.into_spec(base, true)?)?;
            writeln!(stdout, "agent {} listening on {}", handle.whitebox_id(), handle.addr())?;
            stdout.flush()?;
            loop {
                std::thread::park();
            }
        }
        Command::Model(ModelCommand::Show { file }) => {
            let text = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let alloc = Allocator::load(&text)?;
            show_model(&mut stdout, &alloc)?;
        }
    }
    Ok(())
}

fn show_model(out: &mut impl Write, alloc: &Allocator) -> std::io::Result<()> {
    let s = alloc.schedule();
    writeln!(out, "backend: {:?}", alloc.config().backend)?;
    writeln!(out, "episode: {}", s.episode)?;
    writeln!(out, "epsilon: {:.6} (floor {}, decay {})", alloc.epsilon(), s.epsilon_min, s.decay)?;
    for id in alloc.model().transceivers() {
        let q = alloc.model().values(&id);
        let (best, value) = q
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let slot = FrequencySlot::new(best).expect("in range");
        writeln!(out, "{id}: greedy slot {best} ({} GHz), q {value:.6}", slot.frequency_ghz())?;
    }
    Ok(())
}
