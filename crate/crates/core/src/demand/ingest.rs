//! Trip-record CSV ingestion.
//!
//! Two layouts are accepted, detected from the header:
//!
//! * `pickup_lat,pickup_lon,dropoff_lat,dropoff_lon,pickup_unix_seconds`:
//!   coordinates snapped to the nearest intersection.
//! * `pickup_loc,dropoff_loc,pickup_unix_seconds`: external location ids.

use std::io::Read;
use std::path::Path;

use log::warn;

use super::Request;
use crate::error::{Error, Result};
use crate::road_network::{Location, RoadNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOptions {
    /// Decision epoch length in seconds.
    pub epoch_seconds: f64,
    /// Timestamp mapped to the start of epoch 0.
    pub start_unix_seconds: f64,
    /// Rows at or beyond this epoch are counted as out of range and skipped.
    pub horizon: Option<u32>,
    /// Id given to the first accepted request; ids increase in file order.
    pub first_id: u64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            epoch_seconds: 60.0,
            start_unix_seconds: 0.0,
            horizon: None,
            first_id: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub requests: Vec<Request>,
    /// Rows whose origin and destination snapped to the same intersection.
    pub dropped_same_location: usize,
    /// Rows that failed to parse or referenced unknown locations.
    pub malformed: usize,
    /// Rows before epoch 0 or beyond the horizon.
    pub out_of_range: usize,
}

enum Layout {
    Coordinates { plat: usize, plon: usize, dlat: usize, dlon: usize, ts: usize },
    Locations { pick: usize, drop: usize, ts: usize },
}

impl Layout {
    fn detect(headers: &csv::StringRecord) -> Option<Layout> {
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let ts = col("pickup_unix_seconds")?;
        if let (Some(plat), Some(plon), Some(dlat), Some(dlon)) = (
            col("pickup_lat"),
            col("pickup_lon"),
            col("dropoff_lat"),
            col("dropoff_lon"),
        ) {
            return Some(Layout::Coordinates { plat, plon, dlat, dlon, ts });
        }
        Some(Layout::Locations {
            pick: col("pickup_loc")?,
            drop: col("dropoff_loc")?,
            ts,
        })
    }
}

/// Nearest-intersection lookup on an equirectangular projection, bucketed
/// into a uniform grid.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<(f64, f64)>,
    lon_scale: f64,
    min: (f64, f64),
    cell: f64,
    dims: (usize, usize),
    buckets: Vec<Vec<u32>>,
}

impl SpatialIndex {
    pub fn new(net: &RoadNetwork) -> Result<SpatialIndex> {
        let coords: Vec<(f64, f64)> = net
            .locations()
            .map(|l| {
                net.coord(l).ok_or_else(|| {
                    Error::invalid(format!("location {} has no coordinate", net.node_id(l)))
                })
            })
            .collect::<Result<_>>()?;
        if coords.is_empty() {
            return Err(Error::invalid("cannot snap to an empty network"));
        }
        let mean_lat = coords.iter().map(|c| c.0).sum::<f64>() / coords.len() as f64;
        let lon_scale = mean_lat.to_radians().cos();
        let points: Vec<(f64, f64)> = coords.iter().map(|&(lat, lon)| (lat, lon * lon_scale)).collect();
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in &points {
            lo = (lo.0.min(p.0), lo.1.min(p.1));
            hi = (hi.0.max(p.0), hi.1.max(p.1));
        }
        let extent = (hi.0 - lo.0).max(hi.1 - lo.1).max(1e-9);
        let side = ((points.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let cell = extent / side as f64;
        let dims = (
            ((hi.0 - lo.0) / cell) as usize + 1,
            ((hi.1 - lo.1) / cell) as usize + 1,
        );
        let mut buckets = vec![Vec::new(); dims.0 * dims.1];
        let mut index = SpatialIndex {
            points,
            lon_scale,
            min: lo,
            cell,
            dims,
            buckets: Vec::new(),
        };
        for (i, &p) in index.points.iter().enumerate() {
            let (r, c) = index.cell_of(p);
            buckets[r * dims.1 + c].push(i as u32);
        }
        index.buckets = buckets;
        Ok(index)
    }

    fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        (lat, lon * self.lon_scale)
    }

    fn cell_of(&self, p: (f64, f64)) -> (usize, usize) {
        let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
        (
            clamp((p.0 - self.min.0) / self.cell, self.dims.0),
            clamp((p.1 - self.min.1) / self.cell, self.dims.1),
        )
    }

    /// Squared projected distance from `(lat, lon)` to a location.
    pub fn distance2(&self, lat: f64, lon: f64, loc: Location) -> f64 {
        let q = self.project(lat, lon);
        let p = self.points[loc.index()];
        (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)
    }

    /// Closest location; ties go to the smaller location.
    pub fn nearest(&self, lat: f64, lon: f64) -> Location {
        let q = self.project(lat, lon);
        let (r0, c0) = self.cell_of(q);
        let mut best = (f64::INFINITY, u32::MAX);
        let max_ring = self.dims.0.max(self.dims.1);
        for ring in 0..=max_ring {
            let (rlo, rhi) = (r0.saturating_sub(ring), (r0 + ring).min(self.dims.0 - 1));
            let (clo, chi) = (c0.saturating_sub(ring), (c0 + ring).min(self.dims.1 - 1));
            for r in rlo..=rhi {
                for c in clo..=chi {
                    if r.abs_diff(r0) != ring && c.abs_diff(c0) != ring {
                        continue;
                    }
                    for &i in &self.buckets[r * self.dims.1 + c] {
                        let p = self.points[i as usize];
                        let d2 = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
                        if d2 < best.0 || (d2 == best.0 && i < best.1) {
                            best = (d2, i);
                        }
                    }
                }
            }
            // Any point outside the searched square is at least `ring * cell`
            // away (queries outside the bounding box only get farther).
            let reach = ring as f64 * self.cell;
            if best.1 != u32::MAX && reach * reach > best.0 {
                break;
            }
        }
        Location(best.1)
    }
}

/// Reads trip records from a file. See [`parse_trip_records`].
pub fn ingest_trip_records(path: &Path, net: &RoadNetwork, opts: &IngestOptions) -> Result<IngestReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trip_records(file, net, opts)
}

/// Parses trip records, snapping or resolving both endpoints and mapping
/// timestamps to `floor((ts - start) / epoch_seconds)`.
pub fn parse_trip_records(input: impl Read, net: &RoadNetwork, opts: &IngestOptions) -> Result<IngestReport> {
    if !(opts.epoch_seconds > 0.0) {
        return Err(Error::invalid("epoch length must be positive"));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut report = IngestReport::default();
    if headers.is_empty() {
        return Ok(report);
    }
    let layout = Layout::detect(&headers).ok_or_else(|| {
        Error::invalid(format!(
            "unrecognised trip-record header `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        ))
    })?;
    let index = match layout {
        Layout::Coordinates { .. } => Some(SpatialIndex::new(net)?),
        Layout::Locations { .. } => None,
    };

    let mut next_id = opts.first_id;
    for record in reader.records() {
        let Ok(record) = record else {
            report.malformed += 1;
            continue;
        };
        let field = |i: usize| record.get(i).map(str::trim).and_then(|s| s.parse::<f64>().ok());
        let parsed = match layout {
            Layout::Coordinates { plat, plon, dlat, dlon, ts } => {
                match (field(plat), field(plon), field(dlat), field(dlon), field(ts)) {
                    (Some(a), Some(b), Some(c), Some(d), Some(t)) if [a, b, c, d].iter().all(|v| v.is_finite()) => {
                        let index = index.as_ref().expect("built for coordinate layout");
                        Some((index.nearest(a, b), index.nearest(c, d), t))
                    }
                    _ => None,
                }
            }
            Layout::Locations { pick, drop, ts } => {
                let id = |i: usize| record.get(i).and_then(|s| s.trim().parse::<u64>().ok());
                match (id(pick), id(drop), field(ts)) {
                    (Some(p), Some(d), Some(t)) => match (net.location(p), net.location(d)) {
                        (Ok(p), Ok(d)) => Some((p, d, t)),
                        _ => None,
                    },
                    _ => None,
                }
            }
        };
        let Some((origin, destination, ts)) = parsed.filter(|p| p.2.is_finite()) else {
            report.malformed += 1;
            continue;
        };
        let epoch = ((ts - opts.start_unix_seconds) / opts.epoch_seconds).floor();
        if epoch < 0.0 || epoch >= opts.horizon.map_or(u32::MAX as f64, f64::from) {
            report.out_of_range += 1;
            continue;
        }
        if origin == destination {
            report.dropped_same_location += 1;
            continue;
        }
        report.requests.push(Request {
            id: super::RequestId(next_id),
            origin,
            destination,
            arrival_epoch: epoch as u32,
        });
        next_id += 1;
    }
    if report.malformed > 0 {
        warn!("skipped {} malformed trip records", report.malformed);
    }
    Ok(report)
}

/// Writes requests in the pre-snapped layout, timestamping each at the
/// start of its epoch.
pub fn write_trip_records(path: &Path, net: &RoadNetwork, requests: &[Request], opts: &IngestOptions) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["pickup_loc", "dropoff_loc", "pickup_unix_seconds"])?;
    for r in requests {
        let ts = opts.start_unix_seconds + r.arrival_epoch as f64 * opts.epoch_seconds;
        w.write_record([
            net.node_id(r.origin).to_string(),
            net.node_id(r.destination).to_string(),
            ts.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_network::{generate_grid_city, GridSpec};

    fn city() -> RoadNetwork {
        generate_grid_city(&GridSpec {
            rows: 4,
            cols: 4,
            ..GridSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn empty_file_gives_no_requests() {
        let r = parse_trip_records("".as_bytes(), &city(), &IngestOptions::default()).unwrap();
        assert!(r.requests.is_empty());
        let r = parse_trip_records("pickup_loc,dropoff_loc,pickup_unix_seconds\n".as_bytes(), &city(), &IngestOptions::default()).unwrap();
        assert!(r.requests.is_empty());
    }

    #[test]
    fn epoch_is_floor_of_timestamp() {
        let csv = "pickup_loc,dropoff_loc,pickup_unix_seconds\n0,5,61\n1,2,59.9\n";
        let r = parse_trip_records(csv.as_bytes(), &city(), &IngestOptions::default()).unwrap();
        assert_eq!(r.requests[0].arrival_epoch, 1);
        assert_eq!(r.requests[1].arrival_epoch, 0);
    }

    #[test]
    fn malformed_and_degenerate_rows_counted() {
        let csv = "pickup_loc,dropoff_loc,pickup_unix_seconds\n0,5,10\nx,5,10\n3,3,10\n0,999,10\n0,1\n";
        let r = parse_trip_records(csv.as_bytes(), &city(), &IngestOptions::default()).unwrap();
        assert_eq!(r.requests.len(), 1);
        assert_eq!(r.dropped_same_location, 1);
        assert_eq!(r.malformed, 3);
    }

    #[test]
    fn unknown_header_rejected() {
        assert!(parse_trip_records("a,b,c\n1,2,3\n".as_bytes(), &city(), &IngestOptions::default()).is_err());
    }

    #[test]
    fn missing_file_rejected() {
        assert!(ingest_trip_records(Path::new("/nonexistent/trips.csv"), &city(), &IngestOptions::default()).is_err());
    }

    #[test]
    fn horizon_and_start_offset() {
        let csv = "pickup_loc,dropoff_loc,pickup_unix_seconds\n0,5,1000\n0,5,1130\n0,5,999\n";
        let opts = IngestOptions {
            start_unix_seconds: 1000.0,
            horizon: Some(2),
            ..IngestOptions::default()
        };
        let r = parse_trip_records(csv.as_bytes(), &city(), &opts).unwrap();
        assert_eq!(r.requests.len(), 1);
        assert_eq!(r.out_of_range, 2);
    }

    #[test]
    fn round_trip_through_presnapped_layout() {
        let net = city();
        let reqs = vec![
            Request::new(0, Location(0), Location(9), 0).unwrap(),
            Request::new(1, Location(4), Location(2), 3).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trips.csv");
        write_trip_records(&p, &net, &reqs, &IngestOptions::default()).unwrap();
        let a = ingest_trip_records(&p, &net, &IngestOptions::default()).unwrap();
        let b = ingest_trip_records(&p, &net, &IngestOptions::default()).unwrap();
        assert_eq!(a.requests, reqs);
        assert_eq!(a, b);
    }
}
