//! Epoch loop: batch, feasible actions, values, scores, assignment, motion.

use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_gen::{generate_feasible_actions, ActionGenConfig, ActionSet};
use crate::cevd::{score_all, CevdParams, Kernel, VehicleValues};
use crate::demand::{check_requests, epoch_batches, DemandStats, EpochBatch, Request};
use crate::error::{Error, Result};
use crate::fleet::{DelayConstraints, InsertionSearch, Vehicle};
use crate::matching::{solve, Assignment, AssignmentInstance, ScoredAction};
use crate::road_network::{ClusterAssignment, Location, RoadNetwork};
use crate::value_fn::{Checkpoint, EpochSummary, FeatureLayout, OutputActivation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Immediate reward only.
    #[serde(rename = "myopic")]
    Myopic,
    /// Learned values without demand features, unconstrained output.
    #[serde(rename = "neuradp")]
    NeurAdp,
    /// Learned values with demand features and a positive output.
    #[serde(rename = "neuradp+")]
    NeurAdpPlus,
    /// `neuradp+` values mixed with neighbour feedback.
    #[serde(rename = "cevd")]
    Cevd,
}

impl Mode {
    pub fn uses_values(self) -> bool {
        self != Mode::Myopic
    }

    /// Whether the value features include current and future demand.
    pub fn exogenous(self) -> bool {
        matches!(self, Mode::NeurAdpPlus | Mode::Cevd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Myopic => "myopic",
            Mode::NeurAdp => "neuradp",
            Mode::NeurAdpPlus => "neuradp+",
            Mode::Cevd => "cevd",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "myopic" => Ok(Mode::Myopic),
            "neuradp" => Ok(Mode::NeurAdp),
            "neuradp+" | "neuradp-plus" => Ok(Mode::NeurAdpPlus),
            "cevd" => Ok(Mode::Cevd),
            _ => Err(Error::InvalidConfig(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub epoch_seconds: f64,
    pub max_pickup_delay: f64,
    pub capacity: usize,
    pub fleet_size: usize,
    /// Number of clusters.
    pub clusters: usize,
    pub gamma: f64,
    /// Episode length in epochs.
    pub horizon: usize,
    /// Seed for the initial vehicle positions.
    pub fleet_seed: u64,
    pub lambda: f64,
    pub alpha: f64,
    /// Divisor for cluster distances in the kernel; default is the largest
    /// cluster distance.
    pub kernel_scale: Option<f64>,
    pub mode: Mode,
    pub cap_combos: Option<usize>,
    pub insertion: InsertionSearch,
    /// Assignment time budget in seconds; default 80% of the epoch.
    pub solver_budget: Option<f64>,
    /// Window of the discounted future demand, in epochs.
    pub future_window: usize,
    /// Period of the time-of-day features; default the horizon.
    pub epochs_per_cycle: Option<usize>,
    /// Write measured wall times into the metrics CSV (breaks byte-level
    /// reproducibility of that column).
    pub record_timing: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            epoch_seconds: 60.0,
            max_pickup_delay: 120.0,
            capacity: 4,
            fleet_size: 20,
            clusters: 8,
            gamma: 0.9,
            horizon: 60,
            fleet_seed: 0,
            lambda: 0.0,
            alpha: 0.0,
            kernel_scale: None,
            mode: Mode::NeurAdpPlus,
            cap_combos: Some(50),
            insertion: InsertionSearch::Exhaustive,
            solver_budget: None,
            future_window: 30,
            epochs_per_cycle: None,
            record_timing: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        DelayConstraints::new(self.max_pickup_delay, self.epoch_seconds)?;
        CevdParams::new(self.lambda, self.gamma)?;
        if self.capacity == 0 {
            return Err(Error::InvalidConfig("capacity must be positive".into()));
        }
        if self.clusters == 0 {
            return Err(Error::InvalidConfig("cluster count must be positive".into()));
        }
        if let Some(b) = self.solver_budget {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidConfig(format!("solver budget {b} invalid")));
            }
        }
        Ok(())
    }

    pub fn constraints(&self) -> Result<DelayConstraints> {
        DelayConstraints::new(self.max_pickup_delay, self.epoch_seconds)
    }

    pub fn budget(&self) -> Duration {
        Duration::from_secs_f64(self.solver_budget.unwrap_or(0.8 * self.epoch_seconds))
    }

    pub fn cycle(&self) -> usize {
        self.epochs_per_cycle.unwrap_or(self.horizon).max(1)
    }

    pub fn action_config(&self) -> ActionGenConfig {
        ActionGenConfig {
            cap_combos: self.cap_combos,
            insertion: self.insertion,
        }
    }
}

/// Immutable world shared by every run: network, clusters, demand history.
#[derive(Clone, Debug)]
pub struct Environment {
    pub net: RoadNetwork,
    pub clusters: ClusterAssignment,
    pub stats: DemandStats,
}

/// Vehicles at seeded uniform-random intersections.
pub fn place_fleet(net: &RoadNetwork, size: usize, capacity: usize, seed: u64) -> Vec<Vehicle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|i| Vehicle::new(i as u32, capacity, Location(rng.random_range(0..net.len() as u32))))
        .collect()
}

/// Untrained value network shaped for `config.mode`: demand features and a
/// positive output for the `neuradp+` family, neither for `neuradp`.
pub fn initial_checkpoint(env: &Environment, config: &SimConfig, hidden: &[usize], seed: u64) -> Result<Checkpoint> {
    let layout = FeatureLayout::new(
        config.clusters,
        config.capacity,
        config.max_pickup_delay,
        config.cycle(),
        config.mode.exogenous(),
        &env.stats,
    );
    let output = if config.mode == Mode::NeurAdp {
        OutputActivation::Identity
    } else {
        OutputActivation::Softplus
    };
    Checkpoint::new(layout, hidden, output, seed)
}

/// Everything computed for one epoch before vehicles move.
#[derive(Clone, Debug)]
pub struct Decision {
    pub sets: Vec<ActionSet>,
    /// Per vehicle, per action; empty in myopic mode.
    pub features: Vec<Vec<Vec<f64>>>,
    pub values: Vec<Vec<f64>>,
    pub vhat: Vec<Vec<f64>>,
    pub scores: Vec<Vec<f64>>,
    pub assignment: Assignment,
    /// Objective of the chosen actions under the noise-free scores.
    pub objective: f64,
}

impl Decision {
    /// Sum of the chosen actions' values.
    pub fn chosen_value(&self) -> f64 {
        self.values.iter().zip(&self.assignment.choice).map(|(v, &c)| v[c]).sum()
    }

    pub fn chosen_reward(&self) -> u32 {
        self.sets.iter().zip(&self.assignment.choice).map(|(s, &c)| s.actions[c].reward).sum()
    }

    pub fn truncated(&self) -> usize {
        self.sets.iter().filter(|s| s.truncated).count()
    }
}

/// Gaussian perturbation of assignment scores.
pub struct Exploration<'r> {
    pub sigma: f64,
    pub rng: &'r mut ChaCha8Rng,
}

pub struct Simulator<'a> {
    env: &'a Environment,
    config: &'a SimConfig,
    value: Option<Checkpoint>,
    kernel: Kernel,
    params: CevdParams,
    constraints: DelayConstraints,
    pub fleet: Vec<Vehicle>,
}

impl<'a> Simulator<'a> {
    pub fn new(env: &'a Environment, config: &'a SimConfig, value: Option<&Checkpoint>) -> Result<Self> {
        config.validate()?;
        if env.clusters.k() != config.clusters {
            return Err(Error::InvalidConfig(format!(
                "config asks for {} clusters but the assignment has {}",
                config.clusters,
                env.clusters.k()
            )));
        }
        let value = if config.mode.uses_values() {
            let c = value.ok_or_else(|| Error::InvalidConfig(format!("mode {} needs a value checkpoint", config.mode)))?;
            let l = &c.layout;
            if l.k != config.clusters || l.capacity != config.capacity || l.exogenous != config.mode.exogenous() {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint layout (K={}, capacity={}, demand features={}) does not fit mode {} with K={}, capacity={}",
                    l.k, l.capacity, l.exogenous, config.mode, config.clusters, config.capacity
                )));
            }
            Some(c.clone())
        } else {
            None
        };
        let scale = config.kernel_scale.unwrap_or_else(|| Kernel::default_scale(&env.clusters));
        let (lambda, alpha) = if config.mode == Mode::Cevd {
            (config.lambda, config.alpha)
        } else {
            (0.0, 0.0)
        };
        let gamma = if config.mode == Mode::Myopic { 0.0 } else { config.gamma };
        Ok(Simulator {
            env,
            config,
            value,
            kernel: Kernel::new(&env.clusters, alpha, scale)?,
            params: CevdParams::new(lambda, gamma)?,
            constraints: config.constraints()?,
            fleet: place_fleet(&env.net, config.fleet_size, config.capacity, config.fleet_seed),
        })
    }

    pub fn config(&self) -> &SimConfig {
        self.config
    }

    pub fn value(&self) -> Option<&Checkpoint> {
        self.value.as_ref()
    }

    pub fn value_mut(&mut self) -> Option<&mut Checkpoint> {
        self.value.as_mut()
    }

    pub fn now(&self, epoch: u32) -> f64 {
        epoch as f64 * self.config.epoch_seconds
    }

    /// Builds and solves the epoch's assignment problem without moving anything.
    pub fn decide(&self, batch: &EpochBatch, explore: Option<Exploration<'_>>) -> Result<Decision> {
        let env = self.env;
        let now = self.now(batch.epoch);
        let acfg = self.config.action_config();
        let sets: Vec<ActionSet> = self
            .fleet
            .par_iter()
            .map(|v| generate_feasible_actions(v, batch, &env.net, &env.clusters, now, &self.constraints, &acfg))
            .collect();

        let (features, values): (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) = match &self.value {
            Some(c) => {
                let summary = EpochSummary::new(&self.fleet, &env.clusters, batch, &env.stats, now);
                let per_vehicle: Vec<(Vec<Vec<f64>>, Vec<f64>)> = self
                    .fleet
                    .par_iter()
                    .zip(&sets)
                    .map(|(v, set)| {
                        let xs: Vec<Vec<f64>> = set
                            .actions
                            .iter()
                            .map(|a| c.layout.featurize(&summary, v, a, &env.net, &env.clusters))
                            .collect();
                        let vs = c.net.evaluate_batch(&xs)?;
                        Ok((xs, vs))
                    })
                    .collect::<Result<_>>()?;
                per_vehicle.into_iter().unzip()
            }
            None => (Vec::new(), sets.iter().map(|s| vec![0.0; s.actions.len()]).collect()),
        };

        let table: Vec<VehicleValues> = self
            .fleet
            .iter()
            .zip(&sets)
            .zip(&values)
            .map(|((v, s), vals)| VehicleValues {
                home: env.clusters.cluster_of(v.position),
                rewards: s.actions.iter().map(|a| a.reward as f64).collect(),
                clusters: s.actions.iter().map(|a| a.cluster).collect(),
                values: vals.clone(),
            })
            .collect();
        let (scores, vhat) = score_all(&table, &self.kernel, &self.params)?;

        let mut instance = AssignmentInstance {
            vehicles: sets
                .iter()
                .zip(&scores)
                .map(|(s, sc)| {
                    s.actions
                        .iter()
                        .zip(sc)
                        .map(|(a, &score)| ScoredAction {
                            requests: a.requests.clone(),
                            score,
                        })
                        .collect()
                })
                .collect(),
        };
        if let Some(ex) = explore {
            if ex.sigma > 0.0 {
                let normal = Normal::new(0.0, ex.sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                for a in instance.vehicles.iter_mut().flatten() {
                    a.score += normal.sample(ex.rng);
                }
            }
        }
        let assignment = solve(&instance, self.config.budget())?;
        if !assignment.optimal {
            log::warn!("epoch {}: assignment budget exhausted, using best incumbent", batch.epoch);
        }
        let objective = scores.iter().zip(&assignment.choice).map(|(s, &c)| s[c]).sum();
        Ok(Decision {
            sets,
            features,
            values,
            vhat,
            scores,
            assignment,
            objective,
        })
    }

    /// Commits the chosen routes and drives every vehicle for one epoch.
    /// Returns the number of requests accepted.
    pub fn apply(&mut self, batch: &EpochBatch, decision: &Decision) -> u32 {
        let now = self.now(batch.epoch);
        for ((v, set), &c) in self.fleet.iter_mut().zip(&decision.sets).zip(&decision.assignment.choice) {
            v.route.clone_from(&set.actions[c].route);
        }
        let net = &self.env.net;
        let dt = self.config.epoch_seconds;
        self.fleet.par_iter_mut().for_each(|v| {
            v.advance(net, now, dt);
        });
        decision.chosen_reward()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub arrived: u32,
    pub served: u32,
    pub cum_service_rate: f64,
    pub est_value: f64,
    pub realized_return: f64,
    pub gap: f64,
    pub solver_optimal: bool,
    /// Measured decision time in milliseconds.
    pub wall_ms: f64,
    /// Assignment objective under the deployed scores.
    pub objective: f64,
    /// Vehicles whose action set was cut to the cap.
    pub truncated: u32,
}

/// Runs one episode over `requests`, which must fall inside the horizon.
pub fn run_episode(env: &Environment, config: &SimConfig, value: Option<&Checkpoint>, requests: &[Request]) -> Result<Vec<EpochMetrics>> {
    check_requests(&env.net, requests)?;
    let batches = epoch_batches(requests, config.horizon)?;
    let mut sim = Simulator::new(env, config, value)?;
    let mut metrics = Vec::with_capacity(batches.len());
    let (mut arrived_total, mut served_total) = (0u64, 0u64);
    for batch in &batches {
        let start = Instant::now();
        let decision = sim.decide(batch, None)?;
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() > config.epoch_seconds {
            log::warn!("epoch {} took {:.1}s, longer than the epoch itself", batch.epoch, elapsed.as_secs_f64());
        }
        let served = sim.apply(batch, &decision);
        arrived_total += batch.len() as u64;
        served_total += served as u64;
        metrics.push(EpochMetrics {
            epoch: batch.epoch,
            arrived: batch.len() as u32,
            served,
            cum_service_rate: if arrived_total == 0 { 0.0 } else { served_total as f64 / arrived_total as f64 },
            est_value: decision.chosen_value(),
            realized_return: 0.0,
            gap: 0.0,
            solver_optimal: decision.assignment.optimal,
            wall_ms: elapsed.as_secs_f64() * 1e3,
            objective: decision.objective,
            truncated: decision.truncated() as u32,
        });
    }
    let gaps = bellman_gap_report(&metrics, config.gamma);
    for (m, g) in metrics.iter_mut().zip(gaps) {
        m.realized_return = g.realized;
        m.gap = g.gap;
    }
    Ok(metrics)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapPoint {
    pub epoch: u32,
    pub estimated: f64,
    pub realized: f64,
    pub gap: f64,
}

/// `|est_value_t - sum_{s >= 0} gamma^s served_{t+s}|` from logged metrics.
pub fn bellman_gap_report(metrics: &[EpochMetrics], gamma: f64) -> Vec<GapPoint> {
    let mut realized = vec![0.0; metrics.len()];
    let mut acc = 0.0;
    for (t, m) in metrics.iter().enumerate().rev() {
        acc = m.served as f64 + gamma * acc;
        realized[t] = acc;
    }
    metrics
        .iter()
        .zip(realized)
        .map(|(m, r)| GapPoint {
            epoch: m.epoch,
            estimated: m.est_value,
            realized: r,
            gap: (m.est_value - r).abs(),
        })
        .collect()
}

pub fn mean_gap(metrics: &[EpochMetrics]) -> f64 {
    if metrics.is_empty() {
        return 0.0;
    }
    metrics.iter().map(|m| m.gap).sum::<f64>() / metrics.len() as f64
}

#[derive(Serialize)]
struct MetricsRow {
    epoch: u32,
    arrived: u32,
    served: u32,
    cum_service_rate: f64,
    est_value: f64,
    realized_return: f64,
    gap: f64,
    solver_optimal: u8,
    wall_ms: f64,
}

/// CSV `epoch,arrived,served,cum_service_rate,est_value,realized_return,gap,solver_optimal,wall_ms`.
/// `wall_ms` is written as 0 unless `record_timing` is set.
pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics], record_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for m in metrics {
        w.serialize(MetricsRow {
            epoch: m.epoch,
            arrived: m.arrived,
            served: m.served,
            cum_service_rate: m.cum_service_rate,
            est_value: m.est_value,
            realized_return: m.realized_return,
            gap: m.gap,
            solver_optimal: m.solver_optimal as u8,
            wall_ms: if record_timing { m.wall_ms } else { 0.0 },
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the columns written by [`write_metrics_csv`]; fields not in the
/// file are zero.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochMetrics>> {
    #[derive(Deserialize)]
    struct Row {
        epoch: u32,
        arrived: u32,
        served: u32,
        cum_service_rate: f64,
        est_value: f64,
        realized_return: f64,
        gap: f64,
        solver_optimal: u8,
        wall_ms: f64,
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| {
            let row: Row = row?;
            Ok(EpochMetrics {
                epoch: row.epoch,
                arrived: row.arrived,
                served: row.served,
                cum_service_rate: row.cum_service_rate,
                est_value: row.est_value,
                realized_return: row.realized_return,
                gap: row.gap,
                solver_optimal: row.solver_optimal != 0,
                wall_ms: row.wall_ms,
                objective: 0.0,
                truncated: 0,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    pub totals: Vec<f64>,
    pub mean_served: f64,
    /// Sample standard deviation (zero for a single run).
    pub std_served: f64,
    pub mean_service_rate: f64,
    /// Trailing moving average of the across-run mean served per epoch.
    pub moving_average: Vec<f64>,
}

pub fn aggregate_runs(runs: &[Vec<EpochMetrics>], window: usize) -> Result<RunSummary> {
    if runs.is_empty() {
        return Err(Error::invalid("no runs to aggregate"));
    }
    let totals: Vec<f64> = runs.iter().map(|r| r.iter().map(|m| m.served as f64).sum()).collect();
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let std = if totals.len() > 1 {
        (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let rates: Vec<f64> = runs
        .iter()
        .map(|r| {
            let arrived: f64 = r.iter().map(|m| m.arrived as f64).sum();
            let served: f64 = r.iter().map(|m| m.served as f64).sum();
            if arrived > 0.0 {
                served / arrived
            } else {
                0.0
            }
        })
        .collect();
    let epochs = runs.iter().map(Vec::len).max().unwrap_or(0);
    let per_epoch: Vec<f64> = (0..epochs)
        .map(|t| runs.iter().map(|r| r.get(t).map_or(0.0, |m| m.served as f64)).sum::<f64>() / n)
        .collect();
    let w = window.max(1);
    let moving_average = (0..epochs)
        .map(|t| {
            let lo = (t + 1).saturating_sub(w);
            per_epoch[lo..=t].iter().sum::<f64>() / (t + 1 - lo) as f64
        })
        .collect();
    Ok(RunSummary {
        runs: runs.len(),
        mean_served: mean,
        std_served: std,
        mean_service_rate: rates.iter().sum::<f64>() / n,
        totals,
        moving_average,
    })
}
