//! Requests, per-epoch batches and demand statistics.

mod ingest;
mod stats;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::road_network::{ClusterAssignment, Location, RoadNetwork};

pub use ingest::{ingest_trip_records, parse_trip_records, write_trip_records, IngestOptions, IngestReport, SpatialIndex};
pub use stats::{compute_future_demand, DemandSeries, DemandStats};
pub use synth::{synthesize_demand, DemandModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl std::fmt::Display for RequestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A trip request `<origin, destination, arrival epoch>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub origin: Location,
    pub destination: Location,
    pub arrival_epoch: u32,
}

impl Request {
    pub fn new(id: u64, origin: Location, destination: Location, arrival_epoch: u32) -> Result<Self> {
        if origin == destination {
            return Err(Error::invalid(format!(
                "request {id} has identical origin and destination {origin}"
            )));
        }
        Ok(Request {
            id: RequestId(id),
            origin,
            destination,
            arrival_epoch,
        })
    }

    /// Absolute arrival time: requests of epoch `t` are released at `t * epoch_seconds`.
    #[inline]
    pub fn arrival_time(&self, epoch_seconds: f64) -> f64 {
        self.arrival_epoch as f64 * epoch_seconds
    }
}

/// All requests released in one decision epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochBatch {
    pub epoch: u32,
    pub requests: Vec<Request>,
}

impl EpochBatch {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Request counts per cluster of origin (the current demand `g_t`).
    pub fn counts_by_cluster(&self, clusters: &ClusterAssignment) -> Vec<f64> {
        let mut g = vec![0.0; clusters.k()];
        for r in &self.requests {
            g[clusters.cluster_of(r.origin).index()] += 1.0;
        }
        g
    }
}

/// Groups requests into `horizon` batches, one per epoch, keeping input
/// order inside each batch.
pub fn epoch_batches(requests: &[Request], horizon: usize) -> Result<Vec<EpochBatch>> {
    let mut batches: Vec<EpochBatch> = (0..horizon)
        .map(|t| EpochBatch {
            epoch: t as u32,
            requests: Vec::new(),
        })
        .collect();
    for r in requests {
        let slot = batches.get_mut(r.arrival_epoch as usize).ok_or_else(|| {
            Error::invalid(format!(
                "request {} arrives in epoch {} beyond horizon {horizon}",
                r.id, r.arrival_epoch
            ))
        })?;
        slot.requests.push(*r);
    }
    Ok(batches)
}

/// Per-epoch per-cluster origin counts for one demand sample path.
pub fn demand_series(requests: &[Request], horizon: usize, clusters: &ClusterAssignment) -> Result<DemandSeries> {
    Ok(epoch_batches(requests, horizon)?
        .iter()
        .map(|b| b.counts_by_cluster(clusters))
        .collect())
}

pub fn check_requests(net: &RoadNetwork, requests: &[Request]) -> Result<()> {
    for r in requests {
        if !net.contains(r.origin) || !net.contains(r.destination) {
            return Err(Error::invalid(format!("request {} references unknown location", r.id)));
        }
        if r.origin == r.destination {
            return Err(Error::invalid(format!("request {} has origin = destination", r.id)));
        }
    }
    Ok(())
}
