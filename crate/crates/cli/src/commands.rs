use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde_json::{json, Value};

use ridepool::calibration::{calibrate, CalibrationReport};
use ridepool::demand::{demand_series, ingest_trip_records, synthesize_demand, write_trip_records, DemandModel, DemandStats, IngestOptions, Request};
use ridepool::oracle;
use ridepool::road_network::{cluster_intersections, generate_grid_city, ClusterAssignment, GridSpec, RoadNetwork};
use ridepool::simulator::{aggregate_runs, initial_checkpoint, read_metrics_csv, run_episode, write_metrics_csv, Environment, EpochMetrics, Mode};
use ridepool::value_fn::{train, Checkpoint};

use crate::config::{Layers, Settings};
use crate::{CalibrateArgs, Command, Ctx, GenCityArgs, GenDemandArgs, OracleArgs, Outcome, ReportArgs, SimulateArgs, TrainArgs};

pub const GRAPH_FILE: &str = "city.graph";
pub const CLUSTER_FILE: &str = "clusters.csv";
pub const DEFAULT_CALIBRATION: &str = "calibration.csv";

fn demand_dir(set: &str) -> PathBuf {
    Path::new("demand").join(set)
}

fn stats_file(set: &str) -> PathBuf {
    demand_dir(set).join("stats.csv")
}

fn outcome(tag: impl Into<String>) -> Outcome {
    Outcome {
        tag: tag.into(),
        success: true,
        ..Outcome::default()
    }
}

/// Fresh-run adjustments that replays must not repeat: in cevd mode, take
/// lambda and alpha from a calibration report. Returns what was consumed.
pub fn prepare(ctx: &Ctx, command: &mut Command, settings: &mut Settings, layers: &Layers) -> Result<Option<Value>> {
    let Command::Simulate(args) = command else {
        return Ok(None);
    };
    if settings.sim.mode != Mode::Cevd {
        if args.calibration.is_some() {
            log::warn!("--calibration ignored outside cevd mode");
        }
        return Ok(None);
    }
    let path = match &args.calibration {
        Some(p) => p.clone(),
        None if layers.is_set("lambda") || layers.is_set("alpha") => return Ok(None),
        None if ctx.input(DEFAULT_CALIBRATION).exists() => PathBuf::from(DEFAULT_CALIBRATION),
        None => {
            log::warn!("cevd mode without a calibration report; using lambda={} alpha={}", settings.sim.lambda, settings.sim.alpha);
            return Ok(None);
        }
    };
    let (lambda, alpha) = CalibrationReport::read_best(&ctx.input(&path))?;
    settings.sim.lambda = lambda;
    settings.sim.alpha = alpha;
    args.calibration = Some(path.clone());
    Ok(Some(json!({ "report": path, "lambda": lambda, "alpha": alpha })))
}

pub fn execute(ctx: &Ctx, command: &Command, settings: &Settings) -> Result<Outcome> {
    match command {
        Command::GenCity(a) => gen_city(ctx, a, settings),
        Command::GenDemand(a) => gen_demand(ctx, a, settings),
        Command::Train(a) => train_cmd(ctx, a, settings),
        Command::Calibrate(a) => calibrate_cmd(ctx, a, settings),
        Command::Simulate(a) => simulate(ctx, a, settings),
        Command::Report(a) => report(ctx, a),
        Command::OracleCheck(a) => oracle_check(ctx, a),
        Command::Replay(_) => bail!("a manifest cannot record a replay"),
    }
}

fn gen_city(ctx: &Ctx, args: &GenCityArgs, settings: &Settings) -> Result<Outcome> {
    let mut out = outcome("gen-city");
    let net = match &args.graph {
        Some(p) => {
            out.inputs.push(p.clone());
            let full = RoadNetwork::read(&ctx.input(p))?;
            let net = full.largest_scc()?;
            if net.len() < full.len() {
                log::warn!("kept {} of {} intersections (largest strongly connected part)", net.len(), full.len());
            }
            net
        }
        None => {
            out.seeds.insert("city_seed".into(), args.city_seed);
            generate_grid_city(&GridSpec {
                rows: args.rows,
                cols: args.cols,
                edge_time: args.edge_time,
                jitter: args.jitter,
                seed: args.city_seed,
            })?
        }
    };
    let clusters = cluster_intersections(&net, settings.sim.clusters, args.cluster_seed)?;
    out.seeds.insert("cluster_seed".into(), args.cluster_seed);
    net.write(&ctx.output(GRAPH_FILE)?)?;
    clusters.write_csv(&net, &ctx.output(CLUSTER_FILE)?)?;
    out.outputs.extend([PathBuf::from(GRAPH_FILE), PathBuf::from(CLUSTER_FILE)]);
    out.results.insert("intersections".into(), json!(net.len()));
    out.results.insert("clusters".into(), json!(clusters.k()));
    println!("{} intersections, {} clusters", net.len(), clusters.k());
    Ok(out)
}

fn load_city(ctx: &Ctx, out: &mut Outcome) -> Result<(RoadNetwork, ClusterAssignment)> {
    let net = RoadNetwork::read(&ctx.input(GRAPH_FILE)).context("run `gen-city` first")?;
    let clusters = ClusterAssignment::read_csv(&net, &ctx.input(CLUSTER_FILE))?;
    out.inputs.extend([PathBuf::from(GRAPH_FILE), PathBuf::from(CLUSTER_FILE)]);
    Ok((net, clusters))
}

fn ingest_options(settings: &Settings) -> IngestOptions {
    IngestOptions {
        epoch_seconds: settings.sim.epoch_seconds,
        start_unix_seconds: 0.0,
        horizon: Some(settings.sim.horizon as u32),
        first_id: 0,
    }
}

fn gen_demand(ctx: &Ctx, args: &GenDemandArgs, settings: &Settings) -> Result<Outcome> {
    let sim = &settings.sim;
    let mut out = outcome(format!("gen-demand-{}", args.name));
    let (net, clusters) = load_city(ctx, &mut out)?;
    let paths: Vec<Vec<Request>> = match &args.ingest {
        Some(file) => {
            out.inputs.push(file.clone());
            let opts = IngestOptions {
                start_unix_seconds: args.start_unix,
                ..ingest_options(settings)
            };
            let rep = ingest_trip_records(&ctx.input(file), &net, &opts)?;
            println!(
                "ingested {} requests ({} same-location, {} malformed, {} out of range)",
                rep.requests.len(),
                rep.dropped_same_location,
                rep.malformed,
                rep.out_of_range
            );
            vec![rep.requests]
        }
        None => {
            ensure!(args.paths > 0, "--paths must be positive");
            ensure!(args.peak.is_finite() && args.peak >= 0.0, "--peak must be non-negative");
            let cycle = sim.cycle() as f64;
            let rate_profile = (0..sim.horizon)
                .map(|t| (args.rate * (1.0 + args.peak * (std::f64::consts::TAU * t as f64 / cycle).sin())).max(0.0))
                .collect();
            let model = DemandModel {
                rate_profile,
                origin_weights: None,
                destination_weights: None,
            };
            out.seeds.insert("demand_seed".into(), args.demand_seed);
            (0..args.paths as u64)
                .map(|i| synthesize_demand(&net, &clusters, &model, args.demand_seed.wrapping_add(i), 0))
                .collect::<ridepool::Result<_>>()?
        }
    };
    let dir = ctx.output.join(demand_dir(&args.name));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for entry in std::fs::read_dir(&dir)? {
        let p = entry?.path();
        if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("path_") && n.ends_with(".csv")) {
            std::fs::remove_file(&p)?;
        }
    }
    let opts = IngestOptions {
        epoch_seconds: sim.epoch_seconds,
        ..IngestOptions::default()
    };
    for (i, p) in paths.iter().enumerate() {
        let rel = demand_dir(&args.name).join(format!("path_{i:03}.csv"));
        write_trip_records(&ctx.output(&rel)?, &net, p, &opts)?;
        out.outputs.push(rel);
    }
    let series: Vec<_> = paths.iter().map(|p| demand_series(p, sim.horizon, &clusters)).collect::<ridepool::Result<_>>()?;
    let stats = DemandStats::from_paths(&series, sim.gamma, sim.future_window)?;
    stats.write_csv(&ctx.output(stats_file(&args.name))?)?;
    out.outputs.push(stats_file(&args.name));
    let total: usize = paths.iter().map(Vec::len).sum();
    out.results.insert("paths".into(), json!(paths.len()));
    out.results.insert("requests".into(), json!(total));
    println!("set `{}`: {} paths, {} requests", args.name, paths.len(), total);
    Ok(out)
}

fn load_environment(ctx: &Ctx, settings: &Settings, stats_set: &str, out: &mut Outcome) -> Result<Environment> {
    let (net, clusters) = load_city(ctx, out)?;
    let path = ctx.input(stats_file(stats_set));
    let stats = DemandStats::read_csv(&path).with_context(|| format!("demand statistics for set `{stats_set}`"))?;
    out.inputs.push(stats_file(stats_set));
    ensure!(
        stats.k() == clusters.k(),
        "{} has {} clusters but the city has {}",
        path.display(),
        stats.k(),
        clusters.k()
    );
    if stats.gamma != settings.sim.gamma || stats.window != settings.sim.future_window {
        log::warn!(
            "{} was built with gamma={} window={}, settings say gamma={} window={}",
            path.display(),
            stats.gamma,
            stats.window,
            settings.sim.gamma,
            settings.sim.future_window
        );
    }
    Ok(Environment { net, clusters, stats })
}

fn load_paths(ctx: &Ctx, env: &Environment, settings: &Settings, set: &str, out: &mut Outcome) -> Result<Vec<Vec<Request>>> {
    let dir = ctx.input(demand_dir(set));
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("cannot read demand set {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("path_") && n.ends_with(".csv")));
    files.sort();
    ensure!(!files.is_empty(), "demand set {} has no paths", dir.display());
    let opts = ingest_options(settings);
    files
        .iter()
        .map(|f| {
            let rep = ingest_trip_records(f, &env.net, &opts)?;
            if rep.malformed + rep.out_of_range + rep.dropped_same_location > 0 {
                log::warn!("{}: skipped {} rows", f.display(), rep.malformed + rep.out_of_range + rep.dropped_same_location);
            }
            out.inputs.push(demand_dir(set).join(f.file_name().expect("listed file")));
            Ok(rep.requests)
        })
        .collect()
}

fn train_cmd(ctx: &Ctx, args: &TrainArgs, settings: &Settings) -> Result<Outcome> {
    let mut out = outcome("train");
    let env = load_environment(ctx, settings, &args.stats, &mut out)?;
    let paths = load_paths(ctx, &env, settings, &args.demand, &mut out)?;
    let mut sim = settings.sim.clone();
    if sim.mode == Mode::Cevd {
        sim.mode = Mode::NeurAdpPlus;
    }
    ensure!(sim.mode != Mode::Myopic, "myopic mode has nothing to train");
    let cfg = &settings.train;
    let init = initial_checkpoint(&env, &sim, &cfg.hidden, cfg.seed)?;
    out.seeds.insert("train_seed".into(), cfg.seed);
    out.seeds.insert("fleet_seed".into(), sim.fleet_seed);
    let trained = match train(&env, &sim, cfg, &paths, init) {
        Ok(t) => t,
        Err(ridepool::Error::Diverged { episode, epoch, checkpoint }) => {
            let p = ctx.output(&args.model)?;
            checkpoint.write(&p)?;
            bail!("training diverged at episode {episode}, epoch {epoch}; last finite parameters saved to {}", p.display());
        }
        Err(e) => return Err(e.into()),
    };
    trained.checkpoint.write(&ctx.output(&args.model)?)?;
    let mut log_csv = String::from("episode,served\n");
    for (i, s) in trained.episode_served.iter().enumerate() {
        writeln!(log_csv, "{i},{s}")?;
    }
    std::fs::write(ctx.output("train_log.csv")?, log_csv)?;
    let mut loss_csv = String::from("step,loss\n");
    for (i, l) in trained.losses.iter().enumerate() {
        writeln!(loss_csv, "{i},{l}")?;
    }
    std::fs::write(ctx.output("losses.csv")?, loss_csv)?;
    out.outputs.extend([args.model.clone(), "train_log.csv".into(), "losses.csv".into()]);
    out.results.insert("episodes".into(), json!(trained.episode_served.len()));
    out.results.insert("final_loss".into(), json!(trained.losses.last()));
    println!(
        "trained {} episodes, {} updates, served in last episode: {}",
        trained.episode_served.len(),
        trained.losses.len(),
        trained.episode_served.last().map_or(0, |s| *s)
    );
    Ok(out)
}

fn calibrate_cmd(ctx: &Ctx, args: &CalibrateArgs, settings: &Settings) -> Result<Outcome> {
    let mut out = outcome("calibrate");
    let env = load_environment(ctx, settings, &args.stats, &mut out)?;
    let paths = load_paths(ctx, &env, settings, &args.demand, &mut out)?;
    let ck = Checkpoint::read(&ctx.input(&args.model))?;
    out.inputs.push(args.model.clone());
    let rep = calibrate(&env, &settings.sim, &ck, &paths, &settings.calibration)?;
    rep.write_csv(&ctx.output(&args.out)?)?;
    out.outputs.push(args.out.clone());
    out.seeds.insert("calibration_seed".into(), settings.calibration.seed);
    out.seeds.insert("fleet_seed".into(), settings.sim.fleet_seed);
    out.results.insert("lambda".into(), json!(rep.lambda_star()));
    out.results.insert("alpha".into(), json!(rep.alpha_star()));
    out.results.insert("objective".into(), json!(rep.alpha.best_objective));
    println!(
        "lambda* = {}, alpha* = {} (objective {})",
        rep.lambda_star(),
        rep.alpha_star(),
        rep.alpha.best_objective
    );
    Ok(out)
}

fn simulate(ctx: &Ctx, args: &SimulateArgs, settings: &Settings) -> Result<Outcome> {
    let sim = &settings.sim;
    let run = args.run.clone().unwrap_or_else(|| sim.mode.to_string());
    ensure!(!run.is_empty() && !run.contains(['/', '\\']), "bad run name `{run}`");
    let mut out = outcome(format!("simulate-{run}"));
    let env = load_environment(ctx, settings, &args.stats, &mut out)?;
    let paths = load_paths(ctx, &env, settings, &args.demand, &mut out)?;
    let ck = if sim.mode.uses_values() {
        out.inputs.push(args.model.clone());
        Some(Checkpoint::read(&ctx.input(&args.model))?)
    } else {
        None
    };
    out.seeds.insert("fleet_seed".into(), sim.fleet_seed);
    let runs: Vec<Vec<EpochMetrics>> = paths
        .iter()
        .map(|p| run_episode(&env, sim, ck.as_ref(), p))
        .collect::<ridepool::Result<_>>()?;
    let dir = Path::new("runs").join(&run);
    for (i, m) in runs.iter().enumerate() {
        let rel = dir.join(format!("metrics_{i:03}.csv"));
        write_metrics_csv(&ctx.output(&rel)?, m, sim.record_timing)?;
        out.outputs.push(rel);
    }
    let summary = aggregate_runs(&runs, 1)?;
    let timeouts: usize = runs.iter().flatten().filter(|m| !m.solver_optimal).count();
    if timeouts > 0 {
        log::warn!("{timeouts} epochs hit the solver budget; results may depend on machine speed");
    }
    out.results.insert("served".into(), json!(summary.totals));
    out.results.insert("mean_service_rate".into(), json!(summary.mean_service_rate));
    out.results.insert("solver_timeouts".into(), json!(timeouts));
    out.results.insert("lambda".into(), json!(sim.lambda));
    out.results.insert("alpha".into(), json!(sim.alpha));
    println!(
        "{run}: {} paths, mean served {:.2} (sd {:.2}), service rate {:.4}",
        runs.len(),
        summary.mean_served,
        summary.std_served,
        summary.mean_service_rate
    );
    Ok(out)
}

fn report(ctx: &Ctx, args: &ReportArgs) -> Result<Outcome> {
    let mut out = outcome("report");
    let runs_dir = ctx.input("runs");
    let names: Vec<String> = if args.runs.is_empty() {
        let mut v: Vec<String> = std::fs::read_dir(&runs_dir)
            .with_context(|| format!("cannot read {}", runs_dir.display()))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        v.sort();
        v
    } else {
        args.runs.clone()
    };
    ensure!(!names.is_empty(), "no runs to report");
    let mut summary = String::from("run,paths,mean_served,std_served,mean_service_rate,mean_gap\n");
    let mut gap = String::from("run,epoch,estimated,realized,gap\n");
    let mut served = String::from("run,epoch,mean_served,moving_average\n");
    for name in &names {
        let dir = runs_dir.join(name);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .with_context(|| format!("cannot read run {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let runs: Vec<Vec<EpochMetrics>> = files.iter().map(|f| read_metrics_csv(f)).collect::<ridepool::Result<_>>()?;
        ensure!(!runs.is_empty(), "run {} has no metrics", dir.display());
        for f in &files {
            out.inputs.push(Path::new("runs").join(name).join(f.file_name().expect("listed file")));
        }
        let agg = aggregate_runs(&runs, args.window)?;
        let n = runs.len() as f64;
        let epochs = runs.iter().map(Vec::len).max().unwrap_or(0);
        let mut gap_total = 0.0;
        for t in 0..epochs {
            let mean = |f: fn(&EpochMetrics) -> f64| runs.iter().filter_map(|r| r.get(t)).map(f).sum::<f64>() / n;
            let g = mean(|m| m.gap);
            gap_total += g;
            writeln!(gap, "{name},{t},{},{},{g}", mean(|m| m.est_value), mean(|m| m.realized_return))?;
            writeln!(served, "{name},{t},{},{}", mean(|m| m.served as f64), agg.moving_average[t])?;
        }
        let mean_gap = if epochs > 0 { gap_total / epochs as f64 } else { 0.0 };
        writeln!(
            summary,
            "{name},{},{},{},{},{mean_gap}",
            agg.runs, agg.mean_served, agg.std_served, agg.mean_service_rate
        )?;
        println!(
            "{name:>12}  mean served {:>9.2}  sd {:>7.2}  service rate {:.4}  mean gap {:.3}",
            agg.mean_served, agg.std_served, agg.mean_service_rate, mean_gap
        );
    }
    for (file, body) in [("summary.csv", summary), ("gap.csv", gap), ("served.csv", served)] {
        let rel = args.out.join(file);
        std::fs::write(ctx.output(&rel)?, body)?;
        out.outputs.push(rel);
    }
    Ok(out)
}

fn oracle_check(ctx: &Ctx, args: &OracleArgs) -> Result<Outcome> {
    ensure!(args.scale > 0.0 && args.scale.is_finite(), "--scale must be positive");
    let mut out = outcome("oracle-check");
    out.seeds.insert("oracle_seed".into(), args.oracle_seed);
    let reports = oracle::run_all(args.scale, args.oracle_seed);
    for r in &reports {
        println!(
            "{} {:<30} cases={:<6} failed={:<4} max_error={:.3e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.cases,
            r.failed,
            r.max_error
        );
        for m in &r.messages {
            println!("    {m}");
        }
    }
    let rel = PathBuf::from("oracle_report.json");
    std::fs::write(ctx.output(&rel)?, serde_json::to_string_pretty(&reports)? + "\n")?;
    out.outputs.push(rel);
    out.success = reports.iter().all(|r| r.passed());
    out.results.insert("passed".into(), json!(out.success));
    Ok(out)
}
