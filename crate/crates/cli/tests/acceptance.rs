//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool::calibration::{calibrate, evaluate, CalibrationConfig, CalibrationObjective};
use ridepool::demand::{demand_series, epoch_batches, synthesize_demand, DemandModel, DemandStats, Request};
use ridepool::oracle::{self, SuiteReport};
use ridepool::road_network::{cluster_intersections, generate_grid_city, ClusterAssignment, GridSpec, RoadNetwork};
use ridepool::simulator::{initial_checkpoint, mean_gap, run_episode, Environment, Mode, SimConfig, Simulator};
use ridepool::value_fn::{train, Checkpoint, TrainConfig};

// Pinned tolerances and sizes.
const NORMALIZATION_DRAWS: usize = 10_000;
const ILP_INSTANCES: usize = 500;
const ACTION_SCENARIOS: usize = 100;
const GRADIENT_PAIRS: usize = 20;
const POSITIVITY_EVALS: usize = 10_000;
const FUTURE_DEMAND_FIXTURES: usize = 100;
const IDENTITY_SCENARIOS: u64 = 10;
const GAP_SEEDS: u64 = 5;
const GAP_EPISODES: usize = 100;
const HELD_OUT_SEEDS: u64 = 5;
const DECIDE_BUDGET_SECONDS: f64 = 1.0;
/// Assignment budget inside the decision budget; the anytime incumbent is
/// used (and flagged) when it runs out.
const SOLVER_BUDGET_SECONDS: f64 = 0.6;

type Outcome = Result<(bool, String), String>;

struct World {
    env: Environment,
    sim: SimConfig,
}

struct CityParams {
    side: usize,
    edge_time: f64,
    clusters: usize,
    rate: f64,
    peak: f64,
    horizon: usize,
    /// Each path scales the whole profile by a factor in `1 ± spread`.
    spread: f64,
    seed: u64,
}

/// Grid city with a sinusoidal demand profile and statistics from `history` paths.
fn world(p: &CityParams, history: u64, sim: SimConfig) -> (World, Demand) {
    let net = generate_grid_city(&GridSpec {
        rows: p.side,
        cols: p.side,
        edge_time: p.edge_time,
        jitter: 0.2,
        seed: p.seed,
    })
    .expect("grid");
    let clusters = cluster_intersections(&net, p.clusters, p.seed).expect("clusters");
    let model = DemandModel {
        rate_profile: (0..p.horizon)
            .map(|t| p.rate * (1.0 + p.peak * (std::f64::consts::TAU * t as f64 / p.horizon as f64).sin()))
            .collect(),
        origin_weights: None,
        destination_weights: None,
    };
    let demand = Demand { model, spread: p.spread };
    let paths: Vec<Vec<Request>> = (0..history).map(|s| demand.draw(&net, &clusters, 10_000 + s)).collect();
    let series: Vec<_> = paths.iter().map(|r| demand_series(r, p.horizon, &clusters).unwrap()).collect();
    let stats = DemandStats::from_paths(&series, sim.gamma, sim.future_window).expect("stats");
    let sim = SimConfig {
        clusters: p.clusters,
        horizon: p.horizon,
        ..sim
    };
    (World { env: Environment { net, clusters, stats }, sim }, demand)
}

struct Demand {
    model: DemandModel,
    spread: f64,
}

impl Demand {
    fn draw(&self, net: &RoadNetwork, clusters: &ClusterAssignment, seed: u64) -> Vec<Request> {
        let volume = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed).random_range(1.0 - self.spread..=1.0 + self.spread);
        let model = DemandModel {
            rate_profile: self.model.rate_profile.iter().map(|r| r * volume).collect(),
            ..self.model.clone()
        };
        synthesize_demand(net, clusters, &model, seed, 0).unwrap()
    }
}

fn paths(w: &World, demand: &Demand, seeds: std::ops::Range<u64>) -> Vec<Vec<Request>> {
    seeds.map(|s| demand.draw(&w.env.net, &w.env.clusters, s)).collect()
}

fn suite(r: SuiteReport) -> Outcome {
    let detail = format!("{} cases, {} failed, max error {:.3e}", r.cases, r.failed, r.max_error);
    if r.passed() {
        Ok((true, detail))
    } else {
        Ok((false, format!("{detail}; {:?}", r.messages)))
    }
}

fn reduction_identity() -> Outcome {
    let mut steps = 0;
    for s in 0..IDENTITY_SCENARIOS {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let p = CityParams {
            side: rng.random_range(3..=6),
            edge_time: rng.random_range(30.0..60.0),
            clusters: rng.random_range(2..=5),
            rate: rng.random_range(1.0..6.0),
            peak: 0.5,
            horizon: 12,
            spread: 0.3,
            seed: s,
        };
        let base = SimConfig {
            fleet_size: rng.random_range(2..=8),
            capacity: rng.random_range(1..=4),
            fleet_seed: s,
            mode: Mode::NeurAdpPlus,
            ..SimConfig::default()
        };
        let (w, model) = world(&p, 3, base);
        let ck = initial_checkpoint(&w.env, &w.sim, &[16, 16], s).map_err(|e| e.to_string())?;
        let cevd = SimConfig {
            mode: Mode::Cevd,
            lambda: 0.0,
            alpha: 0.0,
            ..w.sim.clone()
        };
        let requests = &paths(&w, &model, s..s + 1)[0];
        let mut a = Simulator::new(&w.env, &w.sim, Some(&ck)).map_err(|e| e.to_string())?;
        let mut b = Simulator::new(&w.env, &cevd, Some(&ck)).map_err(|e| e.to_string())?;
        for batch in epoch_batches(requests, p.horizon).map_err(|e| e.to_string())? {
            let da = a.decide(&batch, None).map_err(|e| e.to_string())?;
            let db = b.decide(&batch, None).map_err(|e| e.to_string())?;
            let bits = |t: &[Vec<f64>]| t.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
            if bits(&da.scores) != bits(&db.scores) {
                return Ok((false, format!("scenario {s} epoch {}: score tables differ", batch.epoch)));
            }
            let (sa, sb) = (a.apply(&batch, &da), b.apply(&batch, &db));
            if sa != sb {
                return Ok((false, format!("scenario {s} epoch {}: served {sa} vs {sb}", batch.epoch)));
            }
            steps += 1;
        }
    }
    Ok((true, format!("{IDENTITY_SCENARIOS} scenarios, {steps} epochs identical")))
}

fn gap_direction() -> Outcome {
    let p = CityParams {
        side: 8,
        edge_time: 60.0,
        clusters: 8,
        rate: 6.0,
        peak: 0.8,
        horizon: 30,
        spread: 0.7,
        seed: 8,
    };
    let base = SimConfig {
        fleet_size: 20,
        max_pickup_delay: 180.0,
        future_window: 10,
        cap_combos: Some(30),
        solver_budget: Some(5.0),
        ..SimConfig::default()
    };
    let (w, model) = world(&p, 20, base);
    let training = paths(&w, &model, 0..20);
    let held_out = paths(&w, &model, 500..505);
    let mut gaps = [0.0; 2];
    for (slot, mode) in [Mode::NeurAdp, Mode::NeurAdpPlus].into_iter().enumerate() {
        for seed in 0..GAP_SEEDS {
            let sim = SimConfig { mode, ..w.sim.clone() };
            let cfg = TrainConfig {
                episodes: GAP_EPISODES,
                hidden: vec![32, 32],
                seed,
                ..TrainConfig::default()
            };
            let init = initial_checkpoint(&w.env, &sim, &cfg.hidden, seed).map_err(|e| e.to_string())?;
            let ck = train(&w.env, &sim, &cfg, &training, init).map_err(|e| e.to_string())?.checkpoint;
            let mut total = 0.0;
            for r in &held_out {
                total += mean_gap(&run_episode(&w.env, &sim, Some(&ck), r).map_err(|e| e.to_string())?);
            }
            gaps[slot] += total / held_out.len() as f64 / GAP_SEEDS as f64;
        }
    }
    Ok((gaps[1] < gaps[0], format!("mean gap neuradp {:.3}, neuradp+ {:.3}", gaps[0], gaps[1])))
}

struct Improvement {
    myopic: f64,
    plus: f64,
    cevd: f64,
    lambda: f64,
    alpha: f64,
    calibrated: f64,
    origin: f64,
}

fn improvement_run() -> Result<Improvement, String> {
    let p = CityParams {
        side: 10,
        edge_time: 45.0,
        clusters: 10,
        rate: 12.0,
        peak: 0.6,
        horizon: 30,
        spread: 0.7,
        seed: 10,
    };
    let base = SimConfig {
        fleet_size: 30,
        capacity: 4,
        max_pickup_delay: 90.0,
        future_window: 10,
        cap_combos: Some(30),
        solver_budget: Some(5.0),
        mode: Mode::NeurAdpPlus,
        ..SimConfig::default()
    };
    let (w, model) = world(&p, 20, base);
    let training = paths(&w, &model, 0..20);
    let validation = paths(&w, &model, 100..103);
    let held_out = paths(&w, &model, 200..200 + HELD_OUT_SEEDS);
    let cfg = TrainConfig {
        episodes: 60,
        hidden: vec![32, 32],
        ..TrainConfig::default()
    };
    let init = initial_checkpoint(&w.env, &w.sim, &cfg.hidden, 0).map_err(|e| e.to_string())?;
    let ck = train(&w.env, &w.sim, &cfg, &training, init).map_err(|e| e.to_string())?.checkpoint;
    let ccfg = CalibrationConfig {
        lambda_samples: 7,
        alpha_samples: 7,
        ..CalibrationConfig::default()
    };
    let report = calibrate(&w.env, &w.sim, &ck, &validation, &ccfg).map_err(|e| e.to_string())?;
    let cevd = SimConfig {
        mode: Mode::Cevd,
        lambda: report.lambda_star(),
        alpha: report.alpha_star(),
        ..w.sim.clone()
    };
    let origin = SimConfig {
        mode: Mode::Cevd,
        lambda: 0.0,
        alpha: 0.0,
        ..w.sim.clone()
    };
    let myopic = SimConfig {
        mode: Mode::Myopic,
        ..w.sim.clone()
    };
    let obj = CalibrationObjective::Served;
    let mean = |sim: &SimConfig, v: Option<&Checkpoint>| -> Result<f64, String> {
        Ok(evaluate(&w.env, sim, v, &held_out, obj).map_err(|e| e.to_string())? / held_out.len() as f64)
    };
    Ok(Improvement {
        myopic: mean(&myopic, None)?,
        plus: mean(&w.sim, Some(&ck))?,
        cevd: mean(&cevd, Some(&ck))?,
        lambda: report.lambda_star(),
        alpha: report.alpha_star(),
        calibrated: evaluate(&w.env, &cevd, Some(&ck), &validation, obj).map_err(|e| e.to_string())?,
        origin: evaluate(&w.env, &origin, Some(&ck), &validation, obj).map_err(|e| e.to_string())?,
    })
}

fn improvement_direction(r: &Improvement) -> Outcome {
    Ok((
        r.cevd > r.myopic && r.cevd >= r.plus,
        format!(
            "mean served myopic {:.1}, neuradp+ {:.1}, cevd {:.1} (lambda* {}, alpha* {})",
            r.myopic, r.plus, r.cevd, r.lambda, r.alpha
        ),
    ))
}

fn calibration_monotone(r: &Improvement) -> Outcome {
    Ok((r.calibrated >= r.origin, format!("validation served {} at the optimum, {} at the origin", r.calibrated, r.origin)))
}

fn decide_budget() -> Outcome {
    let p = CityParams {
        side: 10,
        edge_time: 60.0,
        clusters: 10,
        rate: 200.0,
        peak: 0.0,
        horizon: 6,
        spread: 0.0,
        seed: 11,
    };
    let base = SimConfig {
        fleet_size: 50,
        solver_budget: Some(SOLVER_BUDGET_SECONDS),
        mode: Mode::Cevd,
        lambda: 0.5,
        alpha: -2.0,
        ..SimConfig::default()
    };
    let (w, model) = world(&p, 2, base);
    let ck = initial_checkpoint(&w.env, &w.sim, &[64, 64], 0).map_err(|e| e.to_string())?;
    let requests = &paths(&w, &model, 0..1)[0];
    let mut sim = Simulator::new(&w.env, &w.sim, Some(&ck)).map_err(|e| e.to_string())?;
    let (mut worst, mut timeouts, mut largest) = (0.0f64, 0, 0);
    for batch in epoch_batches(requests, p.horizon).map_err(|e| e.to_string())? {
        let start = Instant::now();
        let d = sim.decide(&batch, None).map_err(|e| e.to_string())?;
        worst = worst.max(start.elapsed().as_secs_f64());
        timeouts += usize::from(!d.assignment.optimal);
        largest = largest.max(batch.len());
        sim.apply(&batch, &d);
    }
    Ok((
        worst < DECIDE_BUDGET_SECONDS,
        format!("worst decision {worst:.3}s over {} epochs of up to {largest} requests, {timeouts} solver timeouts", p.horizon),
    ))
}

fn ridepool(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ridepool"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn replay_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let small = ["--set", "horizon=10", "--set", "fleet_size=6", "--set", "clusters=4"];
    // Values of a repeated global flag given after the subcommand replace
    // those given before it, so every override goes after.
    let with = |args: &[&'static str]| -> Vec<&'static str> { args.iter().chain(&small).copied().collect() };
    ridepool(d, &with(&["gen-city", "--rows", "5", "--cols", "5"]))?;
    for (name, seed) in [("train", "0"), ("validation", "50"), ("test", "90")] {
        ridepool(d, &with(&["gen-demand", "--name", name, "--paths", "2", "--rate", "3", "--demand-seed", seed]))?;
    }
    ridepool(d, &with(&["train", "--set", "train.episodes=3", "--set", "train.hidden=[8, 8]"]))?;
    ridepool(d, &with(&["calibrate", "--set", "calibration.lambda_samples=3", "--set", "calibration.alpha_samples=3"]))?;
    let runs = ["myopic", "neuradp+", "cevd"];
    for mode in runs {
        ridepool(d, &with(&["simulate", "--mode", mode]))?;
    }
    let copy = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for mode in runs {
        let manifest = format!("manifests/simulate-{mode}.json");
        if !d.join(&manifest).exists() {
            return Ok((false, format!("no manifest {manifest}")));
        }
        ridepool(d, &["replay", &manifest, "--into", copy.path().to_str().unwrap()])?;
        for i in 0..2 {
            let rel = format!("runs/{mode}/metrics_{i:03}.csv");
            let a = std::fs::read(d.join(&rel)).map_err(|e| format!("{rel}: {e}"))?;
            let b = std::fs::read(copy.path().join(&rel)).map_err(|e| format!("replayed {rel}: {e}"))?;
            if a != b {
                return Ok((false, format!("{rel} differs after replay")));
            }
            files += 1;
        }
    }
    Ok((true, format!("{files} metrics files byte-identical after replay")))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // libtest-style flags (`--list`, `--format`) are accepted and ignored,
    // except `--list`, which has nothing to list.
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let filter = args.iter().skip(1).find(|a| !a.starts_with('-'));
    let run = |n: u32| filter.is_none_or(|f| n.to_string() == *f);

    let mut failed = 0;
    let mut report = |n: u32, name: &str, f: &dyn Fn() -> Outcome| {
        if !run(n) {
            return;
        }
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} {n:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };

    report(1, "reduction identity", &reduction_identity);
    report(2, "probability normalization", &|| suite(oracle::kernel_normalization(NORMALIZATION_DRAWS, 2)));
    report(3, "ILP exactness", &|| suite(oracle::assignment(ILP_INSTANCES, 3)));
    report(4, "feasible-action completeness", &|| suite(oracle::feasible_actions(ACTION_SCENARIOS, 4)));
    report(5, "gradient correctness", &|| suite(oracle::gradients(GRADIENT_PAIRS, 5)));
    report(6, "positivity", &|| suite(oracle::positivity(POSITIVITY_EVALS, 6)));
    report(7, "future-demand formula", &|| suite(oracle::future_demand(FUTURE_DEMAND_FIXTURES, 7)));
    report(8, "Bellman-gap direction", &gap_direction);
    // Criteria 9 and 10 share one training and calibration run.
    let shared_run = std::cell::OnceCell::new();
    let shared = |f: fn(&Improvement) -> Outcome| {
        let cell = &shared_run;
        move || cell.get_or_init(improvement_run).as_ref().map_err(Clone::clone).and_then(f)
    };
    report(9, "improvement direction", &shared(improvement_direction));
    report(10, "calibration monotonicity", &shared(calibration_monotone));
    report(11, "epoch budget", &decide_budget);
    report(12, "replay determinism", &replay_determinism);

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
