//! Randomised checks of the fast code paths against slow, independent
//! reference computations. Each suite is deterministic in its seed.

use std::collections::{BTreeSet, HashSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::action_gen::{generate_feasible_actions, ActionGenConfig, FeasibleAction};
use crate::cevd::{cevd_value, cevd_values, conditional_probs, Kernel, VehicleValues};
use crate::demand::{compute_future_demand, DemandSeries, EpochBatch, Request, RequestId};
use crate::fleet::{best_insertion_with, DelayConstraints, InsertionSearch, StopKind, Vehicle, TIME_EPS};
use crate::matching::{brute_force, check_assignment, solve, AssignmentInstance, ScoredAction};
use crate::road_network::{cluster_intersections, generate_grid_city, ClusterAssignment, ClusterId, EdgeSpec, GridSpec, Location, NodeSpec, RoadNetwork};
use crate::value_fn::{Mlp, OutputActivation};

const MAX_MESSAGES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failed: usize,
    /// Largest error seen, in the suite's own measure (zero for exact suites).
    pub max_error: f64,
    /// First few failure descriptions.
    pub messages: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport {
            name,
            cases: 0,
            failed: 0,
            max_error: 0.0,
            messages: Vec::new(),
        }
    }

    fn record(&mut self, outcome: Result<f64, String>) {
        self.cases += 1;
        match outcome {
            Ok(err) => self.max_error = self.max_error.max(err),
            Err(msg) => {
                self.failed += 1;
                if self.messages.len() < MAX_MESSAGES {
                    self.messages.push(format!("case {}: {msg}", self.cases - 1));
                }
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failed == 0 && self.cases > 0
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }
}

fn random_digraph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> RoadNetwork {
    let nodes = (0..n as u64).map(|i| NodeSpec { id: 7 * i + 3, coord: None }).collect();
    let mut edges = Vec::new();
    for a in 0..n as u64 {
        for b in 0..n as u64 {
            if a != b && rng.random_bool(p) {
                edges.push(EdgeSpec {
                    from: 7 * a + 3,
                    to: 7 * b + 3,
                    seconds: rng.random_range(1.0..100.0),
                });
            }
        }
    }
    RoadNetwork::new(nodes, edges).expect("generated graph is valid")
}

/// All-pairs table against Bellman-Ford relaxation per source, stored paths
/// against the table, and the triangle inequality.
pub fn shortest_paths(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("shortest-paths");
    for _ in 0..cases {
        let n = 20;
        let p = rng.random_range(0.08..0.3);
        let net = random_digraph(&mut rng, n, p);
        let outcome = (|| {
            let mut worst = 0.0f64;
            for s in 0..n {
                let mut dist = vec![f64::INFINITY; n];
                dist[s] = 0.0;
                for _ in 0..n {
                    let mut changed = false;
                    for e in net.edges() {
                        let d = dist[e.from.index()] + e.seconds;
                        if d < dist[e.to.index()] {
                            dist[e.to.index()] = d;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                for (t, &want) in dist.iter().enumerate() {
                    let got = net.time(Location(s as u32), Location(t as u32));
                    if want.is_infinite() != got.is_infinite() {
                        return Err(format!("reachability {s}->{t}: table {got}, oracle {want}"));
                    }
                    if want.is_finite() {
                        let e = rel_err(got, want);
                        if e > 1e-12 {
                            return Err(format!("time {s}->{t}: table {got}, oracle {want}"));
                        }
                        worst = worst.max(e);
                    }
                }
            }
            for _ in 0..100 {
                let (u, v, w) = (
                    Location(rng.random_range(0..n as u32)),
                    Location(rng.random_range(0..n as u32)),
                    Location(rng.random_range(0..n as u32)),
                );
                if net.time(u, w) > net.time(u, v) + net.time(v, w) + 1e-9 {
                    return Err(format!("triangle inequality fails for {u},{v},{w}"));
                }
                if net.time(u, v).is_finite() {
                    let path = net.path(u, v);
                    let len: f64 = path.windows(2).map(|p| edge_time(&net, p[0], p[1])).sum();
                    let e = rel_err(len, net.time(u, v));
                    if path.last() != Some(&v) || e > 1e-12 {
                        return Err(format!("stored path {u}->{v} has length {len}, table {}", net.time(u, v)));
                    }
                }
            }
            Ok(worst)
        })();
        report.record(outcome);
    }
    report
}

fn edge_time(net: &RoadNetwork, a: Location, b: Location) -> f64 {
    net.out_edges(a).iter().find(|e| e.to == b).map_or(f64::INFINITY, |e| e.seconds)
}

/// Component labels against mutual reachability from a transitive closure.
pub fn strongly_connected(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("strongly-connected-components");
    for _ in 0..cases {
        let n = 30;
        let p = rng.random_range(0.02..0.12);
        let net = random_digraph(&mut rng, n, p);
        let mut reach = vec![vec![false; n]; n];
        for (v, row) in reach.iter_mut().enumerate() {
            row[v] = true;
        }
        for e in net.edges() {
            reach[e.from.index()][e.to.index()] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let comp = net.strongly_connected_components();
        let mut outcome = Ok(0.0);
        'outer: for u in 0..n {
            for v in 0..n {
                if (comp[u] == comp[v]) != (reach[u][v] && reach[v][u]) {
                    outcome = Err(format!("nodes {u} and {v} labelled wrongly"));
                    break 'outer;
                }
            }
        }
        report.record(outcome);
    }
    report
}

fn scored(reqs: &[u64], score: f64) -> ScoredAction {
    ScoredAction {
        requests: reqs.iter().map(|&r| RequestId(r)).collect(),
        score,
    }
}

/// Random assignment instance. Scores are multiples of 1/8 so objective
/// sums are exact regardless of summation order.
pub fn random_assignment_instance(rng: &mut impl Rng, vehicles: usize, requests: u64, max_actions: usize) -> AssignmentInstance {
    let mut inst = AssignmentInstance::default();
    for _ in 0..vehicles {
        let mut acts = vec![scored(&[], rng.random_range(0..16) as f64 / 8.0)];
        let mut seen = HashSet::new();
        for _ in 1..rng.random_range(1..=max_actions) {
            let k = rng.random_range(1..=requests.min(3));
            let mut reqs: Vec<u64> = (0..requests).collect();
            for i in 0..k as usize {
                let j = rng.random_range(i..reqs.len());
                reqs.swap(i, j);
            }
            reqs.truncate(k as usize);
            reqs.sort_unstable();
            if seen.insert(reqs.clone()) {
                acts.push(scored(&reqs, rng.random_range(0..64) as f64 / 8.0));
            }
        }
        inst.vehicles.push(acts);
    }
    inst
}

/// Solver against exhaustive joint-action enumeration, plus the validator
/// (one action per vehicle, each request at most once, objective).
pub fn assignment(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("assignment");
    for _ in 0..cases {
        let nv = rng.random_range(1..=4);
        let nr = rng.random_range(1..=4);
        let inst = random_assignment_instance(&mut rng, nv, nr, 8);
        let outcome = (|| {
            let fast = solve(&inst, Duration::from_secs(10)).map_err(|e| e.to_string())?;
            let slow = brute_force(&inst).map_err(|e| e.to_string())?;
            check_assignment(&inst, &fast).map_err(|e| e.to_string())?;
            check_assignment(&inst, &slow).map_err(|e| e.to_string())?;
            if !fast.optimal {
                return Err("solver gave up on a tiny instance".into());
            }
            if fast.objective != slow.objective {
                return Err(format!("solver {} vs enumeration {}", fast.objective, slow.objective));
            }
            Ok(0.0)
        })();
        report.record(outcome);
    }
    report
}

/// A vehicle, possibly mid-route with earlier passengers, and a fresh batch
/// of up to `max_requests` requests one epoch later.
pub struct ActionScenario {
    pub net: RoadNetwork,
    pub clusters: ClusterAssignment,
    pub constraints: DelayConstraints,
    pub vehicle: Vehicle,
    pub batch: EpochBatch,
    pub now: f64,
}

pub fn random_action_scenario(rng: &mut impl Rng, max_requests: usize) -> ActionScenario {
    let net = generate_grid_city(&GridSpec {
        rows: rng.random_range(3..=5),
        cols: rng.random_range(3..=5),
        edge_time: rng.random_range(20.0..60.0),
        jitter: 0.3,
        seed: rng.random(),
    })
    .expect("valid grid");
    let clusters = cluster_intersections(&net, 3, 0).expect("grid has enough nodes");
    let tau = [90.0, 120.0, 180.0, 300.0][rng.random_range(0..4)];
    let epoch = 60.0;
    let constraints = DelayConstraints::new(tau, epoch).expect("positive");
    let n = net.len() as u32;
    let random_request = |rng: &mut dyn rand::RngCore, id: u64, ep: u32| loop {
        let o = Location(rng.random_range(0..n));
        let e = Location(rng.random_range(0..n));
        if let Ok(r) = Request::new(id, o, e, ep) {
            return r;
        }
    };
    let mut vehicle = Vehicle::new(0, rng.random_range(1..=4), Location(rng.random_range(0..n)));
    if rng.random_bool(0.6) {
        let earlier: Vec<Request> = (0..rng.random_range(1..=2)).map(|i| random_request(rng, 1000 + i, 0)).collect();
        let start = rng.random_range(0.0..epoch);
        let fit = best_insertion_with(&vehicle, &earlier, &net, start, &constraints, InsertionSearch::Exhaustive)
            .or_else(|| best_insertion_with(&vehicle, &earlier[..1], &net, start, &constraints, InsertionSearch::Exhaustive));
        if let Some(ins) = fit {
            vehicle.route = ins.route;
        }
        vehicle.advance(&net, start, epoch - start);
    }
    let now = epoch;
    let k = rng.random_range(0..=max_requests);
    let requests = (0..k as u64).map(|i| random_request(rng, i, 1)).collect();
    ActionScenario {
        net,
        clusters,
        constraints,
        vehicle,
        batch: EpochBatch { epoch: 1, requests },
        now,
    }
}

/// Every subset of the batch (up to free capacity) for which a valid
/// route exists, as sorted id lists.
pub fn powerset_feasible(s: &ActionScenario) -> BTreeSet<Vec<RequestId>> {
    let n = s.batch.requests.len();
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize > s.vehicle.remaining_capacity() {
            continue;
        }
        let trip: Vec<Request> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| s.batch.requests[i]).collect();
        if best_insertion_with(&s.vehicle, &trip, &s.net, s.now, &s.constraints, InsertionSearch::Exhaustive).is_some() {
            let mut ids: Vec<RequestId> = trip.iter().map(|r| r.id).collect();
            ids.sort_unstable();
            out.insert(ids);
        }
    }
    out
}

/// Recomputes stop times from scratch and checks each new request's pickup
/// and detour delay, earlier stops' deadlines, pairing and seat count.
pub fn check_action_delays(s: &ActionScenario, action: &FeasibleAction) -> Result<(), String> {
    let tau = s.constraints.max_pickup_delay;
    let mut t = s.now + s.vehicle.eta_offset;
    let mut at = s.vehicle.position;
    let mut load = s.vehicle.onboard.len();
    let mut picked = Vec::new();
    let mut dropped = Vec::new();
    for stop in &action.route {
        t += s.net.time(at, stop.location);
        at = stop.location;
        match stop.kind {
            StopKind::Pickup => {
                load += 1;
                picked.push((stop.request, t));
            }
            StopKind::Dropoff => {
                load = load.checked_sub(1).ok_or("dropoff from an empty vehicle")?;
                dropped.push((stop.request, t));
            }
        }
        if load > s.vehicle.capacity {
            return Err(format!("load {load} over capacity {}", s.vehicle.capacity));
        }
        let new = action.requests.contains(&stop.request);
        if !new && t > stop.deadline + TIME_EPS {
            return Err(format!("earlier request {} late by {:.3}s", stop.request, t - stop.deadline));
        }
    }
    for id in &action.requests {
        let r = s.batch.requests.iter().find(|r| r.id == *id).ok_or("unknown request")?;
        let release = r.arrival_epoch as f64 * s.constraints.epoch_seconds;
        let p: Vec<f64> = picked.iter().filter(|(q, _)| q == id).map(|x| x.1).collect();
        let d: Vec<f64> = dropped.iter().filter(|(q, _)| q == id).map(|x| x.1).collect();
        if p.len() != 1 || d.len() != 1 || d[0] < p[0] {
            return Err(format!("request {id} not picked up then dropped exactly once"));
        }
        if p[0] - release > tau + TIME_EPS {
            return Err(format!("request {id} waits {:.3}s", p[0] - release));
        }
        let detour = d[0] - release - s.net.time(r.origin, r.destination);
        if detour > 2.0 * tau + TIME_EPS {
            return Err(format!("request {id} delayed {detour:.3}s"));
        }
    }
    Ok(())
}

/// Incremental generation without a cap against the powerset oracle, and
/// every route against [`check_action_delays`].
pub fn feasible_actions(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("feasible-actions");
    let config = ActionGenConfig {
        cap_combos: None,
        insertion: InsertionSearch::Exhaustive,
    };
    for _ in 0..cases {
        let s = random_action_scenario(&mut rng, 5);
        let outcome = (|| {
            let set = generate_feasible_actions(&s.vehicle, &s.batch, &s.net, &s.clusters, s.now, &s.constraints, &config);
            if set.truncated || set.actions.first().is_none_or(|a| !a.is_null()) {
                return Err("null action missing or set truncated".to_string());
            }
            let got: Vec<Vec<RequestId>> = set.actions[1..].iter().map(|a| a.requests.clone()).collect();
            let got_set: BTreeSet<Vec<RequestId>> = got.iter().cloned().collect();
            if got_set.len() != got.len() {
                return Err("duplicate actions".into());
            }
            let want = powerset_feasible(&s);
            if got_set != want {
                return Err(format!("generated {got_set:?}, oracle {want:?}"));
            }
            for a in &set.actions {
                check_action_delays(&s, a)?;
            }
            Ok(0.0)
        })();
        report.record(outcome);
    }
    report
}

fn kernel_cities(seed: u64) -> Vec<ClusterAssignment> {
    (0..4)
        .map(|i| {
            let net = generate_grid_city(&GridSpec {
                rows: 4 + i,
                cols: 5,
                edge_time: 45.0,
                jitter: 0.3,
                seed: seed.wrapping_add(i as u64),
            })
            .expect("valid grid");
            cluster_intersections(&net, 3 + i, seed).expect("enough nodes")
        })
        .collect()
}

/// Conditional probabilities over random action clusters and exponents:
/// each distribution sums to one and is strictly positive.
pub fn kernel_normalization(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("kernel-normalization");
    let cities = kernel_cities(seed);
    for _ in 0..cases {
        let c = &cities[rng.random_range(0..cities.len())];
        let alpha = rng.random_range(-10.0..=10.0);
        let outcome = (|| {
            let kernel = Kernel::new(c, alpha, Kernel::default_scale(c)).map_err(|e| e.to_string())?;
            let k = c.k() as u32;
            let f = ClusterId(rng.random_range(0..k));
            let m = rng.random_range(1..=12);
            let acts: Vec<ClusterId> = (0..m).map(|_| ClusterId(rng.random_range(0..k))).collect();
            let p = conditional_probs(&kernel, f, &acts).map_err(|e| e.to_string())?;
            if let Some(x) = p.iter().find(|x| !(**x > 0.0)) {
                return Err(format!("non-positive probability {x} at alpha {alpha}"));
            }
            let err = (p.iter().sum::<f64>() - 1.0).abs();
            if err > 1e-9 {
                return Err(format!("sum off by {err} at alpha {alpha}"));
            }
            Ok(err)
        })();
        report.record(outcome);
    }
    report
}

/// Grouped fast evaluation against the direct double sum per entry.
pub fn cevd_recompute(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("cevd-recompute");
    let cities = kernel_cities(seed);
    for _ in 0..cases {
        let c = &cities[rng.random_range(0..cities.len())];
        let k = c.k() as u32;
        let n = rng.random_range(1..=8);
        let homes = rng.random_range(1..=k);
        let table: Vec<VehicleValues> = (0..n)
            .map(|_| {
                let m = rng.random_range(1..6);
                VehicleValues {
                    home: ClusterId(rng.random_range(0..homes)),
                    rewards: (0..m).map(|f| if f == 0 { 0.0 } else { rng.random_range(1..4) as f64 }).collect(),
                    clusters: (0..m).map(|_| ClusterId(rng.random_range(0..k))).collect(),
                    values: (0..m).map(|_| rng.random_range(0.01..20.0)).collect(),
                }
            })
            .collect();
        let alpha = rng.random_range(-10.0..=10.0);
        let lambda = rng.random_range(-0.95..0.95);
        let outcome = (|| {
            let kernel = Kernel::new(c, alpha, Kernel::default_scale(c)).map_err(|e| e.to_string())?;
            let fast = cevd_values(&table, &kernel, lambda).map_err(|e| e.to_string())?;
            let mut worst = 0.0f64;
            for (i, row) in fast.iter().enumerate() {
                for (f, &v) in row.iter().enumerate() {
                    let direct = cevd_value(i, f, &table, &kernel, lambda).map_err(|e| e.to_string())?;
                    let e = rel_err(v, direct);
                    if e > 1e-9 {
                        return Err(format!("entry ({i}, {f}): fast {v}, direct {direct}"));
                    }
                    worst = worst.max(e);
                }
            }
            Ok(worst)
        })();
        report.record(outcome);
    }
    report
}

/// Backpropagation against central differences on every parameter.
/// The measure is `|fd - bp| / max(|fd|, |bp|, 1e-6)`.
pub fn gradients(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("gradients");
    for case in 0..cases {
        let input = rng.random_range(2..8);
        let sizes = [input, rng.random_range(2..10), rng.random_range(2..10), 1];
        let out = if case % 2 == 0 { OutputActivation::Softplus } else { OutputActivation::Identity };
        let mut net = Mlp::new(&sizes, out, rng.random()).expect("valid sizes");
        for p in net.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
        let outcome = (|| {
            let mut grad = vec![0.0; net.params().len()];
            net.accumulate_grad(&x, 1.0, &mut grad).map_err(|e| e.to_string())?;
            let h = 1e-5;
            let mut worst = 0.0f64;
            for (i, &bp) in grad.iter().enumerate() {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fd = (plus.evaluate(&x).map_err(|e| e.to_string())? - minus.evaluate(&x).map_err(|e| e.to_string())?) / (2.0 * h);
                let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-6);
                if rel >= 1e-4 {
                    return Err(format!("param {i}: finite difference {fd}, backprop {bp}"));
                }
                worst = worst.max(rel);
            }
            Ok(worst)
        })();
        report.record(outcome);
    }
    report
}

/// Softplus-output networks with large random weights and inputs: every
/// value is strictly positive and finite. Each case is one evaluation.
pub fn positivity(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("positivity");
    let mut net = Mlp::new(&[6, 8, 8, 1], OutputActivation::Softplus, seed).expect("valid sizes");
    for case in 0..cases {
        if case % 100 == 0 {
            let spread = [0.1, 1.0, 10.0, 100.0][(case / 100) % 4];
            net = Mlp::new(&[6, 8, 8, 1], OutputActivation::Softplus, rng.random()).expect("valid sizes");
            for p in net.params_mut() {
                *p = rng.random_range(-spread..spread);
            }
        }
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-50.0..50.0)).collect();
        let outcome = match net.evaluate(&x) {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(0.0),
            Ok(v) => Err(format!("value {v}")),
            Err(e) => Err(e.to_string()),
        };
        report.record(outcome);
    }
    report
}

/// Naive per-entry double loop for discounted future demand.
pub fn future_demand_naive(paths: &[DemandSeries], gamma: f64, window: usize) -> DemandSeries {
    let epochs = paths[0].len();
    let k = paths[0].first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; k]; epochs];
    for (t, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let mut total = 0.0;
            for path in paths {
                for s in 0..=window {
                    if t + s < epochs {
                        total += gamma.powi(s as i32) * path[t + s][c];
                    }
                }
            }
            *cell = total / paths.len() as f64;
        }
    }
    out
}

/// The fixed geometric fixture, then random fixtures against
/// [`future_demand_naive`] within `1e-12` relative.
pub fn future_demand(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("future-demand");
    let fixture = compute_future_demand(&[vec![vec![1.0]; 3]], 0.5, 10).map(|f| f.into_iter().flatten().collect::<Vec<_>>());
    report.record(match fixture {
        Ok(v) if v == [1.75, 1.5, 1.0] => Ok(0.0),
        other => Err(format!("geometric fixture gave {other:?}")),
    });
    for _ in 0..cases.saturating_sub(1) {
        let (n, epochs, k) = (rng.random_range(1..5), rng.random_range(1..15), rng.random_range(1..5));
        let paths: Vec<DemandSeries> = (0..n)
            .map(|_| (0..epochs).map(|_| (0..k).map(|_| rng.random_range(0..10) as f64).collect()).collect())
            .collect();
        let gamma = rng.random_range(0.0..0.99);
        let window = rng.random_range(0..20);
        let outcome = compute_future_demand(&paths, gamma, window).map_err(|e| e.to_string()).and_then(|fast| {
            let slow = future_demand_naive(&paths, gamma, window);
            let worst = fast.iter().flatten().zip(slow.iter().flatten()).map(|(a, b)| rel_err(*a, *b)).fold(0.0, f64::max);
            if worst > 1e-12 {
                Err(format!("relative error {worst}"))
            } else {
                Ok(worst)
            }
        });
        report.record(outcome);
    }
    report
}

/// Every suite at `scale` times its base case count.
pub fn run_all(scale: f64, seed: u64) -> Vec<SuiteReport> {
    let n = |base: usize| ((base as f64 * scale).round() as usize).max(1);
    vec![
        shortest_paths(n(20), seed),
        strongly_connected(n(50), seed),
        assignment(n(500), seed),
        feasible_actions(n(100), seed),
        kernel_normalization(n(10_000), seed),
        cevd_recompute(n(200), seed),
        gradients(n(20), seed),
        positivity(n(10_000), seed),
        future_demand(n(100), seed),
    ]
}
