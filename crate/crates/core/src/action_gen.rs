//! Per-vehicle feasible action sets.
//!
//! An action is a set of this epoch's requests together with the cheapest
//! valid route that serves them on top of the vehicle's current plan. Every
//! set also contains the null action, which keeps the current route.
//! Combinations are built level by level: a `k`-set is only tried when all
//! of its `(k-1)`-subsets were feasible, which is sound because dropping a
//! request from a valid route never breaks it.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::demand::{EpochBatch, Request, RequestId};
use crate::fleet::{best_insertion_with, DelayConstraints, InsertionSearch, Stop, StopKind, Vehicle, VehicleId};
use crate::road_network::{ClusterAssignment, ClusterId, RoadNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleAction {
    pub vehicle: VehicleId,
    /// Sorted ids of the new requests; empty for the null action.
    pub requests: Vec<RequestId>,
    /// Post-decision route.
    pub route: Vec<Stop>,
    /// Immediate reward: number of newly accepted requests.
    pub reward: u32,
    /// Seconds from now until the route's last stop.
    pub duration: f64,
    pub added_duration: f64,
    pub cluster: ClusterId,
}

impl FeasibleAction {
    pub fn is_null(&self) -> bool {
        self.requests.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    /// Null action first, then combinations by size and batch order.
    pub actions: Vec<FeasibleAction>,
    /// Whether non-null actions were dropped to respect the cap.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionGenConfig {
    /// Maximum number of non-null actions kept per vehicle; `None` keeps all.
    pub cap_combos: Option<usize>,
    pub insertion: InsertionSearch,
}

impl Default for ActionGenConfig {
    fn default() -> Self {
        ActionGenConfig {
            cap_combos: Some(50),
            insertion: InsertionSearch::Exhaustive,
        }
    }
}

/// Cluster an action is attributed to: the first new pickup on its route,
/// or the vehicle's current cluster for the null action.
pub fn action_cluster(route: &[Stop], requests: &[RequestId], clusters: &ClusterAssignment, vehicle: &Vehicle) -> ClusterId {
    route
        .iter()
        .find(|s| s.kind == StopKind::Pickup && requests.contains(&s.request))
        .map_or(clusters.cluster_of(vehicle.position), |s| clusters.cluster_of(s.location))
}

pub fn generate_feasible_actions(
    vehicle: &Vehicle,
    batch: &EpochBatch,
    net: &RoadNetwork,
    clusters: &ClusterAssignment,
    now: f64,
    constraints: &DelayConstraints,
    config: &ActionGenConfig,
) -> ActionSet {
    let make = |idx: &[u32], route: Vec<Stop>, duration: f64, added: f64| {
        let mut requests: Vec<RequestId> = idx.iter().map(|&i| batch.requests[i as usize].id).collect();
        requests.sort_unstable();
        FeasibleAction {
            vehicle: vehicle.id,
            cluster: action_cluster(&route, &requests, clusters, vehicle),
            reward: requests.len() as u32,
            requests,
            route,
            duration,
            added_duration: added,
        }
    };
    let null = best_insertion_with(vehicle, &[], net, now, constraints, config.insertion)
        .expect("empty trip always fits");
    let mut actions = vec![make(&[], null.route, null.duration, 0.0)];

    let max_size = vehicle.remaining_capacity();
    let mut level: Vec<Vec<u32>> = Vec::new();
    let mut trip: Vec<Request> = Vec::with_capacity(max_size);
    if max_size > 0 {
        for i in 0..batch.requests.len() as u32 {
            trip.clear();
            trip.push(batch.requests[i as usize]);
            if let Some(ins) = best_insertion_with(vehicle, &trip, net, now, constraints, config.insertion) {
                actions.push(make(&[i], ins.route, ins.duration, ins.added_duration));
                level.push(vec![i]);
            }
        }
    }
    let singles: Vec<u32> = level.iter().map(|v| v[0]).collect();
    for _size in 2..=max_size {
        let feasible: HashSet<&[u32]> = level.iter().map(Vec::as_slice).collect();
        let mut next = Vec::new();
        let mut sub = Vec::with_capacity(max_size);
        for combo in &level {
            let last = *combo.last().expect("combos are non-empty");
            for &j in singles.iter().filter(|&&j| j > last) {
                let mut cand = combo.clone();
                cand.push(j);
                // Every (k-1)-subset must itself be feasible.
                let all_subsets = (0..cand.len() - 1).all(|skip| {
                    sub.clear();
                    sub.extend(cand.iter().enumerate().filter(|&(p, _)| p != skip).map(|(_, &x)| x));
                    feasible.contains(sub.as_slice())
                });
                if !all_subsets {
                    continue;
                }
                trip.clear();
                trip.extend(cand.iter().map(|&i| batch.requests[i as usize]));
                if let Some(ins) = best_insertion_with(vehicle, &trip, net, now, constraints, config.insertion) {
                    actions.push(make(&cand, ins.route, ins.duration, ins.added_duration));
                    next.push(cand);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }

    let mut truncated = false;
    if let Some(cap) = config.cap_combos {
        if actions.len() - 1 > cap {
            truncated = true;
            let mut order: Vec<usize> = (1..actions.len()).collect();
            order.sort_by(|&a, &b| {
                actions[b]
                    .reward
                    .cmp(&actions[a].reward)
                    .then(actions[a].added_duration.total_cmp(&actions[b].added_duration))
                    .then(a.cmp(&b))
            });
            let mut keep = vec![false; actions.len()];
            keep[0] = true;
            for &i in order.iter().take(cap) {
                keep[i] = true;
            }
            let mut i = 0;
            actions.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
    }
    ActionSet { actions, truncated }
}

#[derive(Serialize)]
struct StopRecord {
    kind: char,
    request: u64,
    location: u64,
    deadline: f64,
}

#[derive(Serialize)]
struct ActionRecord<'a> {
    epoch: u32,
    vehicle: u32,
    action: usize,
    requests: &'a [RequestId],
    #[serde(rename = "J")]
    reward: u32,
    route: Vec<StopRecord>,
    cluster: u32,
}

/// Debug dump: one JSON object per `(vehicle, action)` line.
pub fn write_actions_jsonl(out: &mut impl Write, epoch: u32, net: &RoadNetwork, sets: &[ActionSet]) -> crate::Result<()> {
    for set in sets {
        for (i, a) in set.actions.iter().enumerate() {
            let record = ActionRecord {
                epoch,
                vehicle: a.vehicle.0,
                action: i,
                requests: &a.requests,
                reward: a.reward,
                route: a
                    .route
                    .iter()
                    .map(|s| StopRecord {
                        kind: if s.kind == StopKind::Pickup { 'P' } else { 'D' },
                        request: s.request.0,
                        location: net.node_id(s.location),
                        deadline: s.deadline,
                    })
                    .collect(),
                cluster: a.cluster.0,
            };
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n").map_err(|e| crate::Error::io("<actions>", e))?;
        }
    }
    Ok(())
}
