//! Fleet checkpoint CSV: `vehicle_id,capacity,location,onboard_ids,route_encoding`.
//!
//! * `location` is the external node id, suffixed `+<seconds>` while the
//!   vehicle is still `eta_offset` seconds away from it.
//! * `onboard_ids` are `;`-separated request ids.
//! * `route_encoding` is `;`-separated `P|D:<request>:<node>:<deadline>`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Stop, StopKind, Vehicle, VehicleId};
use crate::demand::RequestId;
use crate::error::{Error, Result};
use crate::road_network::RoadNetwork;

#[derive(Serialize, Deserialize)]
struct Row {
    vehicle_id: u32,
    capacity: usize,
    location: String,
    onboard_ids: String,
    route_encoding: String,
}

pub fn write_fleet_csv(path: &Path, net: &RoadNetwork, fleet: &[Vehicle]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for v in fleet {
        let mut location = net.node_id(v.position).to_string();
        if v.eta_offset > 0.0 {
            location.push_str(&format!("+{}", v.eta_offset));
        }
        let onboard_ids = v.onboard.iter().map(|r| r.0.to_string()).collect::<Vec<_>>().join(";");
        let route_encoding = v
            .route
            .iter()
            .map(|s| {
                let kind = match s.kind {
                    StopKind::Pickup => 'P',
                    StopKind::Dropoff => 'D',
                };
                format!("{kind}:{}:{}:{}", s.request, net.node_id(s.location), s.deadline)
            })
            .collect::<Vec<_>>()
            .join(";");
        w.serialize(Row {
            vehicle_id: v.id.0,
            capacity: v.capacity,
            location,
            onboard_ids,
            route_encoding,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_fleet_csv(path: &Path, net: &RoadNetwork) -> Result<Vec<Vehicle>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut fleet = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row: Row = row?;
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg,
        };
        let (node, offset) = match row.location.split_once('+') {
            Some((n, o)) => (n, o.parse::<f64>().map_err(|_| bad(format!("bad offset `{o}`")))?),
            None => (row.location.as_str(), 0.0),
        };
        let node: u64 = node.parse().map_err(|_| bad(format!("bad location `{node}`")))?;
        let onboard = split(&row.onboard_ids)
            .map(|s| s.parse().map(RequestId).map_err(|_| bad(format!("bad request id `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let route = split(&row.route_encoding)
            .map(|s| {
                let parts: Vec<&str> = s.split(':').collect();
                let [kind, req, loc, deadline] = parts.as_slice() else {
                    return Err(bad(format!("bad stop `{s}`")));
                };
                let kind = match *kind {
                    "P" => StopKind::Pickup,
                    "D" => StopKind::Dropoff,
                    k => return Err(bad(format!("bad stop kind `{k}`"))),
                };
                Ok(Stop {
                    location: net.location(loc.parse().map_err(|_| bad(format!("bad node `{loc}`")))?)?,
                    kind,
                    request: RequestId(req.parse().map_err(|_| bad(format!("bad request `{req}`")))?),
                    deadline: deadline.parse().map_err(|_| bad(format!("bad deadline `{deadline}`")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        fleet.push(Vehicle {
            id: VehicleId(row.vehicle_id),
            capacity: row.capacity,
            position: net.location(node)?,
            eta_offset: offset,
            route,
            onboard,
        });
    }
    Ok(fleet)
}

fn split(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').filter(|p| !p.is_empty())
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::road_network::Location;

    #[test]
    fn snapshot_round_trip() {
        let net = grid();
        let c = constraints();
        let (p, d) = c.stops_for(&request(4, 3, 9, 1), &net);
        let (_, d2) = c.stops_for(&request(2, 5, 20, 0), &net);
        let mut a = Vehicle::new(0, 4, Location(7));
        a.eta_offset = 12.25;
        a.onboard = vec![RequestId(2)];
        a.route = vec![p, d2, d];
        let b = Vehicle::new(1, 5, Location(0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fleet.csv");
        write_fleet_csv(&path, &net, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_fleet_csv(&path, &net).unwrap(), vec![a, b]);
    }
}
