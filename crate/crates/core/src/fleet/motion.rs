use super::{StopKind, Vehicle, TIME_EPS};
use crate::demand::RequestId;
use crate::road_network::RoadNetwork;

/// Stops completed during one [`Vehicle::advance`], with absolute times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdvanceOutcome {
    pub picked: Vec<(RequestId, f64)>,
    pub dropped: Vec<(RequestId, f64)>,
}

impl AdvanceOutcome {
    pub fn served(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.dropped.iter().map(|(r, _)| *r)
    }
}

impl Vehicle {
    /// Drives the current route for `dt` seconds starting at `now`.
    ///
    /// The vehicle moves edge by edge along shortest paths. When time runs
    /// out mid-edge, `position` becomes the edge's head and `eta_offset` the
    /// seconds still needed to reach it. Idle vehicles stay put.
    pub fn advance(&mut self, net: &RoadNetwork, now: f64, dt: f64) -> AdvanceOutcome {
        let mut out = AdvanceOutcome::default();
        let end = now + dt;
        let mut clock = now;
        loop {
            if self.eta_offset > 0.0 {
                let reach = clock + self.eta_offset;
                if reach > end + TIME_EPS {
                    self.eta_offset = reach - end;
                    return out;
                }
                clock = reach;
                self.eta_offset = 0.0;
            }
            let Some(next) = self.route.first().copied() else {
                return out;
            };
            if next.location == self.position {
                self.route.remove(0);
                match next.kind {
                    StopKind::Pickup => {
                        let at = self.onboard.binary_search(&next.request).unwrap_or_else(|e| e);
                        self.onboard.insert(at, next.request);
                        out.picked.push((next.request, clock));
                    }
                    StopKind::Dropoff => {
                        if let Ok(at) = self.onboard.binary_search(&next.request) {
                            self.onboard.remove(at);
                        }
                        out.dropped.push((next.request, clock));
                    }
                }
                continue;
            }
            if clock >= end - TIME_EPS {
                return out;
            }
            let hop = net.next_hop(self.position, next.location);
            self.eta_offset = net.time(self.position, hop);
            self.position = hop;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::road_network::Location;

    #[test]
    fn idle_vehicle_stays() {
        let net = grid();
        let mut v = Vehicle::new(0, 4, Location(12));
        let out = v.advance(&net, 0.0, 60.0);
        assert_eq!(out, AdvanceOutcome::default());
        assert_eq!(v.position, Location(12));
        assert_eq!(v.eta_offset, 0.0);
    }

    #[test]
    fn single_hop_then_onward() {
        let net = grid();
        let c = constraints();
        // Pickup one block (30 s) away, dropoff three blocks beyond.
        let r = request(1, 1, 4, 0);
        let (p, d) = c.stops_for(&r, &net);
        let mut v = Vehicle::new(0, 4, Location(0));
        v.route = vec![p, d];
        let out = v.advance(&net, 0.0, 60.0);
        assert_eq!(out.picked, vec![(r.id, 30.0)]);
        assert!(out.dropped.is_empty());
        assert_eq!(v.onboard, vec![r.id]);
        // 30 s of surplus: one more block driven.
        assert_eq!(v.position, Location(2));
        assert_eq!(v.eta_offset, 0.0);
        let out = v.advance(&net, 60.0, 60.0);
        assert_eq!(out.dropped, vec![(r.id, 120.0)]);
        assert!(v.onboard.is_empty() && v.route.is_empty());
        assert_eq!(v.position, Location(4));
    }

    #[test]
    fn mid_edge_offset() {
        let net = grid();
        let c = constraints();
        let r = request(1, 2, 4, 0);
        let (p, d) = c.stops_for(&r, &net);
        let mut v = Vehicle::new(0, 4, Location(0));
        v.route = vec![p, d];
        v.advance(&net, 0.0, 45.0);
        assert_eq!(v.position, Location(2));
        assert!((v.eta_offset - 15.0).abs() < 1e-12);
    }
}
