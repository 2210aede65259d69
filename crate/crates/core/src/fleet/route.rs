use std::collections::HashSet;

use super::{DelayConstraints, Stop, StopKind, Vehicle, TIME_EPS};
use crate::demand::{Request, RequestId};
use crate::error::{Error, Result};
use crate::road_network::RoadNetwork;

#[derive(Clone, Debug, PartialEq)]
pub enum RouteViolation {
    /// Pickup for a request that is already onboard or already picked up.
    DuplicatePickup { stop: usize, request: RequestId },
    /// Dropoff for a request that is neither onboard nor picked up earlier.
    DropoffBeforePickup { stop: usize, request: RequestId },
    /// A request in the vehicle (or picked up on the route) is never dropped off.
    MissingDropoff { request: RequestId },
    CapacityExceeded { stop: usize, load: usize },
    DeadlineMissed { stop: usize, late_by: f64 },
}

impl std::fmt::Display for RouteViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RouteViolation::DuplicatePickup { stop, request } => {
                write!(f, "stop {stop}: request {request} picked up twice")
            }
            RouteViolation::DropoffBeforePickup { stop, request } => {
                write!(f, "stop {stop}: request {request} dropped before pickup")
            }
            RouteViolation::MissingDropoff { request } => {
                write!(f, "request {request} is never dropped off")
            }
            RouteViolation::CapacityExceeded { stop, load } => {
                write!(f, "stop {stop}: load {load} exceeds capacity")
            }
            RouteViolation::DeadlineMissed { stop, late_by } => {
                write!(f, "stop {stop}: deadline missed by {late_by:.3}s")
            }
        }
    }
}

/// Arrival time at each stop of `route` driven from the vehicle's state.
pub fn schedule(vehicle: &Vehicle, route: &[Stop], net: &RoadNetwork, now: f64) -> Vec<f64> {
    let mut t = vehicle.ready_time(now);
    let mut at = vehicle.position;
    route
        .iter()
        .map(|s| {
            t += net.time(at, s.location);
            at = s.location;
            t
        })
        .collect()
}

/// Full structural, capacity and deadline check of `route` for `vehicle`.
pub fn check_route(vehicle: &Vehicle, route: &[Stop], net: &RoadNetwork, now: f64) -> Result<(), RouteViolation> {
    let mut inside: HashSet<RequestId> = vehicle.onboard.iter().copied().collect();
    let mut picked: HashSet<RequestId> = HashSet::new();
    let mut dropped: HashSet<RequestId> = HashSet::new();
    let mut load = vehicle.onboard.len();
    if load > vehicle.capacity {
        return Err(RouteViolation::CapacityExceeded { stop: 0, load });
    }
    let times = schedule(vehicle, route, net, now);
    for (i, (stop, &t)) in route.iter().zip(&times).enumerate() {
        match stop.kind {
            StopKind::Pickup => {
                if inside.contains(&stop.request) || !picked.insert(stop.request) || dropped.contains(&stop.request) {
                    return Err(RouteViolation::DuplicatePickup { stop: i, request: stop.request });
                }
                inside.insert(stop.request);
                load += 1;
                if load > vehicle.capacity {
                    return Err(RouteViolation::CapacityExceeded { stop: i, load });
                }
            }
            StopKind::Dropoff => {
                if !inside.remove(&stop.request) {
                    return Err(RouteViolation::DropoffBeforePickup { stop: i, request: stop.request });
                }
                dropped.insert(stop.request);
                load -= 1;
            }
        }
        if t > stop.deadline + TIME_EPS {
            return Err(RouteViolation::DeadlineMissed {
                stop: i,
                late_by: t - stop.deadline,
            });
        }
    }
    if let Some(&request) = inside.iter().min() {
        return Err(RouteViolation::MissingDropoff { request });
    }
    Ok(())
}

/// Whether the vehicle's current plan is consistent and meets every deadline
/// from `now`. Violations are logged at debug level.
pub fn validate_route(vehicle: &Vehicle, net: &RoadNetwork, now: f64, _constraints: &DelayConstraints) -> bool {
    match check_route(vehicle, &vehicle.route, net, now) {
        Ok(()) => true,
        Err(v) => {
            log::debug!("vehicle {}: {v}", vehicle.id);
            false
        }
    }
}

fn stop_time(vehicle: &Vehicle, route: &[Stop], net: &RoadNetwork, now: f64, id: RequestId, kind: StopKind) -> Result<f64> {
    let i = route
        .iter()
        .position(|s| s.request == id && s.kind == kind)
        .ok_or_else(|| Error::invalid(format!("request {id} has no {kind:?} stop in route")))?;
    Ok(schedule(vehicle, &route[..=i], net, now)[i])
}

/// Scheduled pickup time minus release time.
pub fn pickup_delay(
    vehicle: &Vehicle,
    route: &[Stop],
    request: &Request,
    net: &RoadNetwork,
    now: f64,
    constraints: &DelayConstraints,
) -> Result<f64> {
    let picked = stop_time(vehicle, route, net, now, request.id, StopKind::Pickup)?;
    Ok((picked - request.arrival_time(constraints.epoch_seconds)).max(0.0))
}

/// Scheduled dropoff time minus (scheduled pickup + direct travel time).
pub fn detour_delay(vehicle: &Vehicle, route: &[Stop], request: &Request, net: &RoadNetwork, now: f64) -> Result<f64> {
    let picked = stop_time(vehicle, route, net, now, request.id, StopKind::Pickup)?;
    let dropped = stop_time(vehicle, route, net, now, request.id, StopKind::Dropoff)?;
    Ok((dropped - picked - net.time(request.origin, request.destination)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::road_network::Location;

    #[test]
    fn empty_route_is_valid() {
        let v = Vehicle::new(0, 4, Location(0));
        assert!(validate_route(&v, &grid(), 0.0, &constraints()));
    }

    #[test]
    fn zero_pickup_delay_route_is_valid() {
        let net = grid();
        let c = constraints();
        let r = request(1, 6, 18, 2);
        let now = 120.0;
        let (p, d) = c.stops_for(&r, &net);
        assert_eq!(p.deadline, now + c.max_pickup_delay);
        let mut v = Vehicle::new(0, 4, Location(6));
        v.route = vec![p, d];
        assert!(validate_route(&v, &net, now, &c));
        assert_eq!(pickup_delay(&v, &v.route, &r, &net, now, &c).unwrap(), 0.0);
        assert_eq!(detour_delay(&v, &v.route, &r, &net, now).unwrap(), 0.0);
    }

    #[test]
    fn structural_violations() {
        let net = grid();
        let c = constraints();
        let r = request(1, 6, 18, 0);
        let (p, d) = c.stops_for(&r, &net);
        let mut v = Vehicle::new(0, 4, Location(6));

        v.route = vec![d, p];
        assert!(matches!(check_route(&v, &v.route, &net, 0.0), Err(RouteViolation::DropoffBeforePickup { .. })));
        v.route = vec![p];
        assert!(matches!(check_route(&v, &v.route, &net, 0.0), Err(RouteViolation::MissingDropoff { .. })));
        v.route = vec![p, p, d];
        assert!(matches!(check_route(&v, &v.route, &net, 0.0), Err(RouteViolation::DuplicatePickup { .. })));
        v.route = vec![p, d];
        v.capacity = 0;
        assert!(matches!(check_route(&v, &v.route, &net, 0.0), Err(RouteViolation::CapacityExceeded { .. })));
        v.capacity = 4;
        v.onboard = vec![r.id];
        v.route = vec![d];
        assert!(check_route(&v, &v.route, &net, 0.0).is_ok());
        v.route.clear();
        assert!(matches!(check_route(&v, &v.route, &net, 0.0), Err(RouteViolation::MissingDropoff { .. })));
    }

    #[test]
    fn late_pickup_fails() {
        let net = grid();
        let c = constraints();
        // 8 blocks away at 30 s/block = 240 s > tau = 120 s.
        let r = request(1, 24, 0, 0);
        let (p, d) = c.stops_for(&r, &net);
        let mut v = Vehicle::new(0, 4, Location(0));
        v.route = vec![p, d];
        assert!(!validate_route(&v, &net, 0.0, &c));
    }

    #[test]
    fn delays_need_stops() {
        let net = grid();
        let c = constraints();
        let v = Vehicle::new(0, 4, Location(0));
        let r = request(1, 1, 2, 0);
        assert!(pickup_delay(&v, &[], &r, &net, 0.0, &c).is_err());
        assert!(detour_delay(&v, &[], &r, &net, 0.0).is_err());
    }
}
