//! Vehicles, route plans and their delay feasibility.
//!
//! A vehicle between intersections is represented by the next intersection
//! it will reach (`position`) and the seconds left until it gets there
//! (`eta_offset`). Every re-plan starts from that intersection.

mod insertion;
mod motion;
mod route;
mod snapshot;

use serde::{Deserialize, Serialize};

use crate::demand::{Request, RequestId};
use crate::error::{Error, Result};
use crate::road_network::{Location, RoadNetwork};

pub use insertion::{best_insertion, best_insertion_with, Insertion, InsertionSearch};
pub use motion::AdvanceOutcome;
pub use route::{check_route, detour_delay, pickup_delay, schedule, validate_route, RouteViolation};
pub use snapshot::{read_fleet_csv, write_fleet_csv};

/// Slack allowed when comparing arrival times against deadlines, in seconds.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub location: Location,
    pub kind: StopKind,
    pub request: RequestId,
    /// Latest absolute arrival time, in seconds.
    pub deadline: f64,
}

/// Delay limits: pickup within `max_pickup_delay` of release, and dropoff
/// no later than `2 * max_pickup_delay` after a direct solo trip released at
/// the same moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayConstraints {
    pub max_pickup_delay: f64,
    pub epoch_seconds: f64,
}

impl DelayConstraints {
    pub fn new(max_pickup_delay: f64, epoch_seconds: f64) -> Result<Self> {
        if !(max_pickup_delay > 0.0 && max_pickup_delay.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {max_pickup_delay}")));
        }
        if !(epoch_seconds > 0.0 && epoch_seconds.is_finite()) {
            return Err(Error::InvalidConfig(format!("epoch length must be positive, got {epoch_seconds}")));
        }
        Ok(DelayConstraints {
            max_pickup_delay,
            epoch_seconds,
        })
    }

    pub fn max_detour_delay(&self) -> f64 {
        2.0 * self.max_pickup_delay
    }

    /// The pickup and dropoff stops a request gets when it is accepted.
    /// Deadlines are fixed here and never relaxed afterwards.
    pub fn stops_for(&self, r: &Request, net: &RoadNetwork) -> (Stop, Stop) {
        let released = r.arrival_time(self.epoch_seconds);
        let pickup = Stop {
            location: r.origin,
            kind: StopKind::Pickup,
            request: r.id,
            deadline: released + self.max_pickup_delay,
        };
        let dropoff = Stop {
            location: r.destination,
            kind: StopKind::Dropoff,
            request: r.id,
            deadline: released + net.time(r.origin, r.destination) + self.max_detour_delay(),
        };
        (pickup, dropoff)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub capacity: usize,
    /// Next intersection reached (the current one when `eta_offset == 0`).
    pub position: Location,
    /// Seconds until the vehicle reaches `position`.
    pub eta_offset: f64,
    pub route: Vec<Stop>,
    /// Requests currently in the vehicle, sorted.
    pub onboard: Vec<RequestId>,
}

impl Vehicle {
    pub fn new(id: u32, capacity: usize, position: Location) -> Self {
        Vehicle {
            id: VehicleId(id),
            capacity,
            position,
            eta_offset: 0.0,
            route: Vec::new(),
            onboard: Vec::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.route.is_empty()
    }

    pub fn pending_pickups(&self) -> usize {
        self.route.iter().filter(|s| s.kind == StopKind::Pickup).count()
    }

    /// Seats not yet promised to onboard or assigned passengers.
    pub fn remaining_capacity(&self) -> usize {
        self.capacity
            .saturating_sub(self.onboard.len() + self.pending_pickups())
    }

    /// Requests this vehicle is responsible for: onboard or awaiting pickup.
    pub fn assigned_requests(&self) -> Vec<RequestId> {
        let mut ids = self.onboard.clone();
        ids.extend(
            self.route
                .iter()
                .filter(|s| s.kind == StopKind::Pickup)
                .map(|s| s.request),
        );
        ids.sort_unstable();
        ids
    }

    /// Time at which the vehicle can start a new leg from `position`.
    #[inline]
    pub fn ready_time(&self, now: f64) -> f64 {
        now + self.eta_offset
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::road_network::{generate_grid_city, GridSpec};

    pub fn grid() -> RoadNetwork {
        generate_grid_city(&GridSpec {
            rows: 5,
            cols: 5,
            edge_time: 30.0,
            jitter: 0.0,
            seed: 0,
        })
        .unwrap()
    }

    pub fn constraints() -> DelayConstraints {
        DelayConstraints::new(120.0, 60.0).unwrap()
    }

    pub fn request(id: u64, o: u32, e: u32, epoch: u32) -> Request {
        Request::new(id, Location(o), Location(e), epoch).unwrap()
    }
}
