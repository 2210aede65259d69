//! Minimal-duration insertion of new requests into an existing route.
//!
//! The search merges the new pickup/dropoff pairs into the current stop
//! sequence, keeping the existing order and pickup-before-dropoff for each
//! new request. The exhaustive search is a depth-first enumeration pruned
//! by deadlines, capacity and the incumbent end time; it returns the same
//! optimum as enumerating every interleaving.

use serde::{Deserialize, Serialize};

use super::{DelayConstraints, Stop, StopKind, Vehicle, TIME_EPS};
use crate::demand::Request;
use crate::road_network::{Location, RoadNetwork};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InsertionSearch {
    #[default]
    Exhaustive,
    /// Layered beam search keeping the `width` earliest partial schedules.
    Beam { width: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Insertion {
    pub route: Vec<Stop>,
    /// Arrival time at each stop of `route`.
    pub arrivals: Vec<f64>,
    /// Time from `now` until the last stop is reached.
    pub duration: f64,
    /// `duration` minus the duration of the vehicle's current route.
    pub added_duration: f64,
}

impl Insertion {
    /// Smallest `deadline - arrival` over the route; infinite when empty.
    pub fn min_slack(&self) -> f64 {
        self.route
            .iter()
            .zip(&self.arrivals)
            .map(|(s, t)| s.deadline - t)
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn route_duration(vehicle: &Vehicle, route: &[Stop], net: &RoadNetwork, now: f64) -> f64 {
    super::schedule(vehicle, route, net, now)
        .last()
        .map_or(0.0, |t| t - now)
}

pub fn best_insertion(
    vehicle: &Vehicle,
    trip: &[Request],
    net: &RoadNetwork,
    now: f64,
    constraints: &DelayConstraints,
) -> Option<Insertion> {
    best_insertion_with(vehicle, trip, net, now, constraints, InsertionSearch::Exhaustive)
}

pub fn best_insertion_with(
    vehicle: &Vehicle,
    trip: &[Request],
    net: &RoadNetwork,
    now: f64,
    constraints: &DelayConstraints,
    search: InsertionSearch,
) -> Option<Insertion> {
    let base = route_duration(vehicle, &vehicle.route, net, now);
    if trip.is_empty() {
        return Some(Insertion {
            route: vehicle.route.clone(),
            arrivals: super::schedule(vehicle, &vehicle.route, net, now),
            duration: base,
            added_duration: 0.0,
        });
    }
    if vehicle.onboard.len() + vehicle.pending_pickups() + trip.len() > vehicle.capacity {
        return None;
    }
    let assigned = vehicle.assigned_requests();
    for (i, r) in trip.iter().enumerate() {
        if assigned.binary_search(&r.id).is_ok() || trip[..i].iter().any(|q| q.id == r.id) {
            return None;
        }
    }
    let start = vehicle.ready_time(now);
    // Necessary condition: every new origin reachable before its deadline.
    let pairs: Vec<(Stop, Stop)> = trip.iter().map(|r| constraints.stops_for(r, net)).collect();
    if pairs
        .iter()
        .any(|(p, _)| start + net.time(vehicle.position, p.location) > p.deadline + TIME_EPS)
    {
        return None;
    }

    let root = Partial {
        next_existing: 0,
        status: vec![0; pairs.len()],
        at: vehicle.position,
        time: start,
        load: vehicle.onboard.len(),
        stops: Vec::with_capacity(vehicle.route.len() + 2 * pairs.len()),
        arrivals: Vec::with_capacity(vehicle.route.len() + 2 * pairs.len()),
    };
    let problem = Problem {
        net,
        existing: &vehicle.route,
        pairs: &pairs,
        capacity: vehicle.capacity,
    };
    let best = match search {
        InsertionSearch::Exhaustive => {
            let mut dfs = Dfs {
                problem: &problem,
                best_end: f64::INFINITY,
                best: None,
            };
            let mut node = root;
            dfs.run(&mut node);
            dfs.best
        }
        InsertionSearch::Beam { width } => beam(&problem, root, width.max(1)),
    }?;
    let duration = best.1.last().map_or(0.0, |t| t - now);
    Some(Insertion {
        route: best.0,
        arrivals: best.1,
        duration,
        added_duration: duration - base,
    })
}

struct Problem<'a> {
    net: &'a RoadNetwork,
    existing: &'a [Stop],
    pairs: &'a [(Stop, Stop)],
    capacity: usize,
}

#[derive(Clone)]
struct Partial {
    next_existing: usize,
    /// Per new request: 0 = waiting, 1 = picked up, 2 = dropped off.
    status: Vec<u8>,
    at: Location,
    time: f64,
    load: usize,
    stops: Vec<Stop>,
    arrivals: Vec<f64>,
}

impl Partial {
    fn complete(&self, p: &Problem) -> bool {
        self.next_existing == p.existing.len() && self.status.iter().all(|&s| s == 2)
    }
}

/// One admissible next stop: the stop plus what it changes.
#[derive(Clone, Copy)]
enum Step {
    Existing,
    Pickup(usize),
    Dropoff(usize),
}

impl Problem<'_> {
    /// Candidate next stops in a fixed order: existing stop first, then each
    /// new request's pending stop in trip order.
    fn steps(&self, node: &Partial) -> impl Iterator<Item = (Step, Stop)> + '_ {
        let existing = self
            .existing
            .get(node.next_existing)
            .map(|s| (Step::Existing, *s));
        let status = node.status.clone();
        let fresh = (0..self.pairs.len()).filter_map(move |j| match status[j] {
            0 => Some((Step::Pickup(j), self.pairs[j].0)),
            1 => Some((Step::Dropoff(j), self.pairs[j].1)),
            _ => None,
        });
        existing.into_iter().chain(fresh)
    }

    /// Arrival time at `stop`, or `None` when capacity or its deadline fails.
    fn admit(&self, node: &Partial, stop: &Stop) -> Option<(f64, usize)> {
        let load = match stop.kind {
            StopKind::Pickup => node.load + 1,
            StopKind::Dropoff => node.load.checked_sub(1)?,
        };
        if load > self.capacity {
            return None;
        }
        let t = node.time + self.net.time(node.at, stop.location);
        (t <= stop.deadline + TIME_EPS).then_some((t, load))
    }
}

fn apply(node: &mut Partial, step: Step, stop: Stop, time: f64, load: usize) -> (Location, f64, usize) {
    let undo = (node.at, node.time, node.load);
    match step {
        Step::Existing => node.next_existing += 1,
        Step::Pickup(j) => node.status[j] = 1,
        Step::Dropoff(j) => node.status[j] = 2,
    }
    node.at = stop.location;
    node.time = time;
    node.load = load;
    node.stops.push(stop);
    node.arrivals.push(time);
    undo
}

fn revert(node: &mut Partial, step: Step, undo: (Location, f64, usize)) {
    match step {
        Step::Existing => node.next_existing -= 1,
        Step::Pickup(j) => node.status[j] = 0,
        Step::Dropoff(j) => node.status[j] = 1,
    }
    (node.at, node.time, node.load) = undo;
    node.stops.pop();
    node.arrivals.pop();
}

struct Dfs<'a, 'p> {
    problem: &'a Problem<'p>,
    best_end: f64,
    best: Option<(Vec<Stop>, Vec<f64>)>,
}

impl Dfs<'_, '_> {
    fn run(&mut self, node: &mut Partial) {
        if node.complete(self.problem) {
            if node.time < self.best_end {
                self.best_end = node.time;
                self.best = Some((node.stops.clone(), node.arrivals.clone()));
            }
            return;
        }
        let steps: Vec<(Step, Stop)> = self.problem.steps(node).collect();
        for (step, stop) in steps {
            let Some((t, load)) = self.problem.admit(node, &stop) else {
                continue;
            };
            // Travel times are non-negative, so the end time is at least `t`.
            if t >= self.best_end {
                continue;
            }
            let undo = apply(node, step, stop, t, load);
            self.run(node);
            revert(node, step, undo);
        }
    }
}

fn beam(problem: &Problem, root: Partial, width: usize) -> Option<(Vec<Stop>, Vec<f64>)> {
    let mut layer = vec![root];
    loop {
        if let Some(done) = layer
            .iter()
            .filter(|n| n.complete(problem))
            .min_by(|a, b| a.time.total_cmp(&b.time))
        {
            return Some((done.stops.clone(), done.arrivals.clone()));
        }
        let mut next = Vec::new();
        for node in &layer {
            for (step, stop) in problem.steps(node) {
                if let Some((t, load)) = problem.admit(node, &stop) {
                    let mut child = node.clone();
                    apply(&mut child, step, stop, t, load);
                    next.push(child);
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        // Stable sort keeps expansion order among equal times.
        next.sort_by(|a, b| a.time.total_cmp(&b.time));
        next.truncate(width);
        layer = next;
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{check_route, Vehicle};
    use super::*;

    #[test]
    fn empty_trip_keeps_route() {
        let net = grid();
        let c = constraints();
        let mut v = Vehicle::new(0, 4, Location(0));
        let (p, d) = c.stops_for(&request(1, 1, 7, 0), &net);
        v.route = vec![p, d];
        let ins = best_insertion(&v, &[], &net, 0.0, &c).unwrap();
        assert_eq!(ins.route, v.route);
        assert_eq!(ins.added_duration, 0.0);
    }

    #[test]
    fn direct_service_for_empty_vehicle() {
        let net = grid();
        let c = constraints();
        let r = request(1, 7, 13, 0);
        let v = Vehicle::new(0, 4, Location(7));
        let ins = best_insertion(&v, &[r], &net, 0.0, &c).unwrap();
        assert_eq!(ins.route.len(), 2);
        assert_eq!(ins.route[0].kind, StopKind::Pickup);
        assert_eq!(ins.route[1].kind, StopKind::Dropoff);
        assert_eq!(ins.arrivals[0] , 0.0);
        assert_eq!(ins.route[0].deadline - ins.arrivals[0], c.max_pickup_delay);
        assert_eq!(ins.min_slack(), c.max_pickup_delay);
        assert_eq!(ins.duration, net.time(r.origin, r.destination));
    }

    #[test]
    fn unreachable_request_has_no_insertion() {
        let net = grid();
        let c = constraints();
        let v = Vehicle::new(0, 4, Location(0));
        assert!(best_insertion(&v, &[request(1, 24, 3, 0)], &net, 0.0, &c).is_none());
    }

    #[test]
    fn capacity_is_respected() {
        let net = grid();
        let c = constraints();
        let v = Vehicle::new(0, 1, Location(6));
        let trip = [request(1, 6, 8, 0), request(2, 7, 8, 0)];
        assert!(best_insertion(&v, &trip, &net, 0.0, &c).is_none());
        let v = Vehicle::new(0, 2, Location(6));
        let ins = best_insertion(&v, &trip, &net, 0.0, &c).unwrap();
        assert!(check_route(&v, &ins.route, &net, 0.0).is_ok());
    }

    #[test]
    fn duplicate_request_rejected() {
        let net = grid();
        let c = constraints();
        let r = request(1, 6, 8, 0);
        let v = Vehicle::new(0, 4, Location(6));
        assert!(best_insertion(&v, &[r, r], &net, 0.0, &c).is_none());
    }

    #[test]
    fn shared_ride_beats_sequential() {
        let net = grid();
        let c = constraints();
        // Same corridor: pick both, then drop both.
        let a = request(1, 5, 9, 0);
        let b = request(2, 6, 8, 0);
        let v = Vehicle::new(0, 4, Location(5));
        let ins = best_insertion(&v, &[a, b], &net, 0.0, &c).unwrap();
        assert_eq!(ins.duration, 4.0 * 30.0);
        assert!(check_route(&v, &ins.route, &net, 0.0).is_ok());
    }

    #[test]
    fn wide_beam_matches_exhaustive() {
        let net = grid();
        let c = constraints();
        let trip = [request(1, 6, 18, 0), request(2, 7, 13, 0), request(3, 11, 17, 0)];
        let v = Vehicle::new(0, 4, Location(6));
        let ex = best_insertion(&v, &trip, &net, 0.0, &c).unwrap();
        let bm = best_insertion_with(&v, &trip, &net, 0.0, &c, InsertionSearch::Beam { width: 10_000 }).unwrap();
        assert_eq!(ex.duration, bm.duration);
        let narrow = best_insertion_with(&v, &trip, &net, 0.0, &c, InsertionSearch::Beam { width: 1 });
        if let Some(n) = narrow {
            assert!(n.duration >= ex.duration);
        }
    }
}
