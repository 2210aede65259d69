mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use config::{Layers, Settings};

/// Ride-pool dispatch simulator: build a city, generate demand, train value
/// functions, calibrate neighbour mixing and run evaluation episodes.
///
/// Every path is relative to the working directory. Each run writes a
/// manifest under `manifests/` that `replay` can re-execute.
#[derive(Parser, Debug)]
#[command(name = "ridepool", version)]
struct Cli {
    /// Working directory holding inputs and outputs [default: current directory].
    #[arg(long, global = true, env = "RIDEPOOL_WORKDIR")]
    workdir: Option<PathBuf>,

    /// TOML config file (top-level keys mirror the simulation settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a setting, e.g. `--set fleet_size=30` or `--set train.episodes=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Dispatch mode: myopic, neuradp, neuradp+ or cevd.
    #[arg(long, global = true)]
    mode: Option<String>,

    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<f64>,

    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,

    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "RIDEPOOL_THREADS")]
    threads: Option<usize>,

    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Build the road network and its clusters.
    GenCity(GenCityArgs),
    /// Synthesize demand paths or ingest trip records into a named set.
    GenDemand(GenDemandArgs),
    /// Train a value network on a demand set.
    Train(TrainArgs),
    /// Search the neighbour mixing weight and kernel exponent.
    Calibrate(CalibrateArgs),
    /// Run evaluation episodes and write per-epoch metrics.
    Simulate(SimulateArgs),
    /// Aggregate runs into summary, gap and served-curve tables.
    Report(ReportArgs),
    /// Run the brute-force and property suites.
    OracleCheck(OracleArgs),
    /// Re-execute the run recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GenCityArgs {
    /// Read this road graph (largest strongly connected part) instead of a grid.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub rows: usize,
    #[arg(long, default_value_t = 8)]
    pub cols: usize,
    /// Seconds per block.
    #[arg(long, default_value_t = 60.0)]
    pub edge_time: f64,
    #[arg(long, default_value_t = 0.2)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub city_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub cluster_seed: u64,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GenDemandArgs {
    /// Name of the demand set (`demand/<name>/`).
    #[arg(long, default_value = "train")]
    pub name: String,
    /// Number of synthetic paths.
    #[arg(long, default_value_t = 10)]
    pub paths: usize,
    /// Mean requests per epoch.
    #[arg(long, default_value_t = 4.0)]
    pub rate: f64,
    /// Relative amplitude of a sinusoidal cycle in the rate.
    #[arg(long, default_value_t = 0.0)]
    pub peak: f64,
    /// Path `i` is drawn with seed `demand_seed + i`.
    #[arg(long, default_value_t = 0)]
    pub demand_seed: u64,
    /// Ingest this trip-record CSV as a single path instead.
    #[arg(long)]
    pub ingest: Option<PathBuf>,
    /// Unix time of the start of epoch 0 for ingested records.
    #[arg(long, default_value_t = 0.0)]
    pub start_unix: f64,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, default_value = "train")]
    pub demand: String,
    /// Demand set whose statistics feed the demand features.
    #[arg(long, default_value = "train")]
    pub stats: String,
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct CalibrateArgs {
    #[arg(long, default_value = "validation")]
    pub demand: String,
    #[arg(long, default_value = "train")]
    pub stats: String,
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    #[arg(long, default_value = "calibration.csv")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, default_value = "test")]
    pub demand: String,
    #[arg(long, default_value = "train")]
    pub stats: String,
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    /// Calibration report to take lambda and alpha from in cevd mode.
    /// Defaults to `calibration.csv` when present and neither value is set.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Output name (`runs/<run>/`); defaults to the mode.
    #[arg(long)]
    pub run: Option<String>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Runs to include; all of `runs/` by default.
    #[arg(long, value_delimiter = ',')]
    pub runs: Vec<String>,
    /// Moving-average window for the served curve, in epochs.
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct OracleArgs {
    /// Multiplier on each suite's case count.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub oracle_seed: u64,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the original working directory.
    #[arg(long)]
    pub into: Option<PathBuf>,
}

/// Input and output roots; equal except when replaying elsewhere.
pub struct Ctx {
    pub input: PathBuf,
    pub output: PathBuf,
}

impl Ctx {
    pub fn input(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.input.join(rel)
    }

    /// Output path with its parent directory created.
    pub fn output(&self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let p = self.output.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        Ok(p)
    }
}

/// What a command read, wrote and found, for its manifest.
#[derive(Default)]
pub struct Outcome {
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub results: serde_json::Map<String, Value>,
    /// Manifest file name without extension.
    pub tag: String,
    pub success: bool,
}

#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub workdir: PathBuf,
    pub invocation: Command,
    pub settings: Settings,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub results: serde_json::Map<String, Value>,
}

fn write_manifest(ctx: &Ctx, invocation: Command, settings: Settings, outcome: &Outcome) -> Result<PathBuf> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        workdir: ctx.input.clone(),
        invocation,
        settings,
        seeds: outcome.seeds.clone(),
        inputs: outcome.inputs.clone(),
        outputs: outcome.outputs.clone(),
        results: outcome.results.clone(),
    };
    let path = ctx.output(Path::new("manifests").join(format!("{}.json", outcome.tag)))?;
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cwd = std::env::current_dir()?;
    let absolute = |p: PathBuf| if p.is_absolute() { p } else { cwd.join(p) };

    if let Command::Replay(args) = &cli.command {
        let base = cli.workdir.clone().map(absolute).unwrap_or_else(|| cwd.clone());
        let path = base.join(&args.manifest);
        let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))?;
        if manifest.version != env!("CARGO_PKG_VERSION") {
            log::warn!("manifest written by version {}, replaying with {}", manifest.version, env!("CARGO_PKG_VERSION"));
        }
        let input = cli.workdir.map(absolute).unwrap_or(manifest.workdir);
        let output = args.into.clone().map(absolute).unwrap_or_else(|| input.clone());
        let ctx = Ctx { input, output };
        let outcome = commands::execute(&ctx, &manifest.invocation, &manifest.settings)?;
        let written = write_manifest(&ctx, manifest.invocation, manifest.settings, &outcome)?;
        println!("replayed {} -> {}", path.display(), written.display());
        return Ok(outcome.success);
    }

    let root = cli.workdir.clone().map(absolute).unwrap_or_else(|| cwd.clone());
    let ctx = Ctx {
        input: root.clone(),
        output: root,
    };
    let mut layers = Layers::from_file(cli.config.as_ref().map(|p| ctx.input(p)).as_deref())?;
    layers.apply_env(std::env::vars())?;
    for pair in &cli.set {
        layers.set_pair(pair)?;
    }
    if let Some(m) = &cli.mode {
        m.parse::<ridepool::simulator::Mode>()?;
        layers.set("mode", &format!("\"{m}\""))?;
    }
    if let Some(l) = cli.lambda {
        layers.set("lambda", &format!("{l:?}"))?;
    }
    if let Some(a) = cli.alpha {
        layers.set("alpha", &format!("{a:?}"))?;
    }
    let mut settings = layers.resolve()?;
    let mut command = cli.command;
    let consumed = commands::prepare(&ctx, &mut command, &mut settings, &layers)?;
    let mut outcome = commands::execute(&ctx, &command, &settings)?;
    if let Some(c) = consumed {
        outcome.results.insert("calibration".into(), c);
    }
    let written = write_manifest(&ctx, command, settings, &outcome)?;
    log::info!("manifest {}", written.display());
    Ok(outcome.success)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
