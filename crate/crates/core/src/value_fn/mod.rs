//! Per-vehicle value of a post-decision state.
//!
//! Feature layout, in order:
//!
//! | field | width | encoding |
//! |---|---|---|
//! | own cluster | K | one-hot of where the post-decision route ends (current position if idle) |
//! | free seats | 1 | seats left after the action / capacity |
//! | slacks | C | per assigned request, min over its stops of `(deadline - eta) / tau`, clamped to `[0, pad]`, sorted, padded with `pad` |
//! | time phase | 2 | sin and cos of `2 pi (epoch mod cycle) / cycle` |
//! | other vehicles | K | pre-decision vehicle count per cluster, excluding self, / fleet size |
//! | current demand | K | this epoch's requests per origin cluster / `g_scale` (exogenous only) |
//! | future demand | K | `F_t` / `f_scale` (exogenous only) |
//! | route duration | 1 | seconds to the last stop / `4 tau` |

mod mlp;
mod replay;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use mlp::{softplus, Adam, Mlp, OutputActivation};
pub use replay::{Experience, ReplayMemory, StoredAction};
pub use train::{train, train_step, TargetMode, TrainConfig, TrainOutcome, Trainer};

use crate::action_gen::FeasibleAction;
use crate::demand::{DemandStats, EpochBatch, RequestId};
use crate::error::{Error, Result};
use crate::fleet::{schedule, Vehicle};
use crate::road_network::{ClusterAssignment, RoadNetwork};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub k: usize,
    pub capacity: usize,
    pub max_pickup_delay: f64,
    pub epochs_per_cycle: usize,
    /// Whether the demand blocks are present.
    pub exogenous: bool,
    pub g_scale: f64,
    pub f_scale: f64,
    pub slack_pad: f64,
}

impl FeatureLayout {
    pub fn new(k: usize, capacity: usize, max_pickup_delay: f64, epochs_per_cycle: usize, exogenous: bool, stats: &DemandStats) -> Self {
        FeatureLayout {
            k,
            capacity,
            max_pickup_delay,
            epochs_per_cycle: epochs_per_cycle.max(1),
            exogenous,
            g_scale: stats.g_scale(),
            f_scale: stats.future_scale(),
            slack_pad: 3.0,
        }
    }

    pub fn len(&self) -> usize {
        let demand = if self.exogenous { 2 * self.k } else { 0 };
        self.k + 1 + self.capacity + 2 + self.k + demand + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Appends the features of `vehicle` taking `action` to `out`.
    pub fn featurize_into(
        &self,
        out: &mut Vec<f64>,
        summary: &EpochSummary,
        vehicle: &Vehicle,
        action: &FeasibleAction,
        net: &RoadNetwork,
        clusters: &ClusterAssignment,
    ) {
        let start = out.len();
        let k = self.k;

        let end = action.route.last().map_or(vehicle.position, |s| s.location);
        out.extend(std::iter::repeat_n(0.0, k));
        out[start + clusters.cluster_of(end).index()] = 1.0;

        let pickups = action.route.iter().filter(|s| s.kind == crate::fleet::StopKind::Pickup).count();
        let free = self.capacity.saturating_sub(vehicle.onboard.len() + pickups);
        out.push(free as f64 / self.capacity.max(1) as f64);

        let times = schedule(vehicle, &action.route, net, summary.now);
        let mut slack: Vec<(RequestId, f64)> = Vec::with_capacity(self.capacity);
        for (s, t) in action.route.iter().zip(&times) {
            let v = ((s.deadline - t) / self.max_pickup_delay).clamp(0.0, self.slack_pad);
            match slack.iter_mut().find(|(r, _)| *r == s.request) {
                Some((_, m)) => *m = m.min(v),
                None => slack.push((s.request, v)),
            }
        }
        let mut slack: Vec<f64> = slack.into_iter().map(|(_, v)| v).collect();
        slack.sort_by(f64::total_cmp);
        slack.resize(self.capacity, self.slack_pad);
        out.extend(slack);

        let phase = (summary.epoch as usize % self.epochs_per_cycle) as f64 / self.epochs_per_cycle as f64;
        let angle = std::f64::consts::TAU * phase;
        out.push(angle.sin());
        out.push(angle.cos());

        let own = clusters.cluster_of(vehicle.position).index();
        let fleet = summary.fleet_size.max(1) as f64;
        for (c, &n) in summary.vehicle_counts.iter().enumerate() {
            let others = if c == own { n.saturating_sub(1) } else { n };
            out.push(others as f64 / fleet);
        }

        if self.exogenous {
            out.extend(summary.demand.iter().map(|g| g / self.g_scale));
            out.extend(summary.future.iter().map(|f| f / self.f_scale));
        }

        out.push(action.duration / (4.0 * self.max_pickup_delay));
        debug_assert_eq!(out.len() - start, self.len());
    }

    pub fn featurize(
        &self,
        summary: &EpochSummary,
        vehicle: &Vehicle,
        action: &FeasibleAction,
        net: &RoadNetwork,
        clusters: &ClusterAssignment,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.featurize_into(&mut out, summary, vehicle, action, net, clusters);
        out
    }
}

/// Fleet-wide quantities shared by every feature vector of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: u32,
    pub now: f64,
    /// Pre-decision vehicle count per cluster.
    pub vehicle_counts: Vec<u32>,
    pub fleet_size: usize,
    /// Requests released this epoch per origin cluster.
    pub demand: Vec<f64>,
    /// `F_t` per cluster (zero past the statistics horizon).
    pub future: Vec<f64>,
}

impl EpochSummary {
    pub fn new(fleet: &[Vehicle], clusters: &ClusterAssignment, batch: &EpochBatch, stats: &DemandStats, now: f64) -> Self {
        let mut vehicle_counts = vec![0u32; clusters.k()];
        for v in fleet {
            vehicle_counts[clusters.cluster_of(v.position).index()] += 1;
        }
        let future = stats
            .future_at(batch.epoch as usize)
            .filter(|f| f.len() == clusters.k())
            .map_or_else(|| vec![0.0; clusters.k()], <[f64]>::to_vec);
        EpochSummary {
            epoch: batch.epoch,
            now,
            vehicle_counts,
            fleet_size: fleet.len(),
            demand: batch.counts_by_cluster(clusters),
            future,
        }
    }
}

/// Versioned network plus the feature layout it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub layout: FeatureLayout,
    pub net: Mlp,
}

impl Checkpoint {
    /// Fresh network over `layout` with the given hidden widths.
    pub fn new(layout: FeatureLayout, hidden: &[usize], output: OutputActivation, seed: u64) -> Result<Self> {
        let mut sizes = vec![layout.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            net: Mlp::new(&sizes, output, seed)?,
            layout,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint version {}", c.version)));
        }
        if c.net.input_len() != c.layout.len() {
            return Err(Error::invalid("checkpoint network does not match its feature layout"));
        }
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_gen::{generate_feasible_actions, ActionGenConfig};
    use crate::demand::Request;
    use crate::fleet::DelayConstraints;
    use crate::road_network::{cluster_intersections, generate_grid_city, GridSpec, Location};

    struct Fixture {
        net: RoadNetwork,
        clusters: ClusterAssignment,
        dc: DelayConstraints,
        stats: DemandStats,
    }

    fn fixture() -> Fixture {
        let net = generate_grid_city(&GridSpec {
            rows: 4,
            cols: 4,
            edge_time: 30.0,
            jitter: 0.0,
            seed: 0,
        })
        .unwrap();
        let clusters = cluster_intersections(&net, 4, 0).unwrap();
        let g = vec![vec![vec![1.0, 2.0, 0.0, 4.0]; 10]];
        Fixture {
            stats: DemandStats::from_paths(&g, 0.5, 3).unwrap(),
            net,
            clusters,
            dc: DelayConstraints::new(120.0, 60.0).unwrap(),
        }
    }

    #[test]
    fn idle_null_encoding() {
        let f = fixture();
        let layout = FeatureLayout::new(4, 3, 120.0, 10, true, &f.stats);
        let v = Vehicle::new(0, 3, Location(5));
        let batch = EpochBatch { epoch: 2, requests: vec![] };
        let summary = EpochSummary::new(std::slice::from_ref(&v), &f.clusters, &batch, &f.stats, 120.0);
        let set = generate_feasible_actions(&v, &batch, &f.net, &f.clusters, 120.0, &f.dc, &ActionGenConfig::default());
        let x = layout.featurize(&summary, &v, &set.actions[0], &f.net, &f.clusters);
        assert_eq!(x.len(), layout.len());
        let k = 4;
        assert_eq!(x[k], 1.0);
        assert_eq!(&x[k + 1..k + 4], &[3.0, 3.0, 3.0]);
        // Alone in the fleet: no other vehicles anywhere.
        assert!(x[k + 6..2 * k + 6].iter().all(|&c| c == 0.0));
        assert_eq!(*x.last().unwrap(), 0.0);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn actions_share_context_fields() {
        let f = fixture();
        let layout = FeatureLayout::new(4, 4, 120.0, 10, true, &f.stats);
        let v = Vehicle::new(0, 4, Location(5));
        let fleet = vec![v.clone(), Vehicle::new(1, 4, Location(0)), Vehicle::new(2, 4, Location(15))];
        let batch = EpochBatch {
            epoch: 0,
            requests: vec![Request::new(0, Location(6), Location(10), 0).unwrap(), Request::new(1, Location(4), Location(8), 0).unwrap()],
        };
        let summary = EpochSummary::new(&fleet, &f.clusters, &batch, &f.stats, 0.0);
        let set = generate_feasible_actions(&v, &batch, &f.net, &f.clusters, 0.0, &f.dc, &ActionGenConfig::default());
        assert!(set.actions.len() >= 3);
        let xs: Vec<Vec<f64>> = set.actions.iter().map(|a| layout.featurize(&summary, &v, a, &f.net, &f.clusters)).collect();
        let ctx = 4 + 1 + 4;
        let ctx_end = layout.len() - 1;
        for x in &xs[1..] {
            assert_eq!(&x[ctx..ctx_end], &xs[0][ctx..ctx_end]);
        }
        assert_ne!(xs[0], xs[1]);
        // Deterministic.
        assert_eq!(layout.featurize(&summary, &v, &set.actions[1], &f.net, &f.clusters), xs[1]);
    }

    #[test]
    fn layout_without_demand() {
        let f = fixture();
        let with = FeatureLayout::new(4, 4, 120.0, 10, true, &f.stats);
        let without = FeatureLayout::new(4, 4, 120.0, 10, false, &f.stats);
        assert_eq!(with.len() - without.len(), 8);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let f = fixture();
        let layout = FeatureLayout::new(4, 4, 120.0, 10, true, &f.stats);
        let mut c = Checkpoint::new(layout, &[16, 16], OutputActivation::Softplus, 42).unwrap();
        c.net.params_mut()[3] = 0.1 + 0.2;
        c.net.params_mut()[4] = -1.234_567_890_123_456_7e-300;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.json");
        c.write(&path).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        let bits = |c: &Checkpoint| c.net.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&c));
        assert_eq!(back, c);
    }
}
