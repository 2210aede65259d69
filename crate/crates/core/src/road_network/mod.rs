//! Road graph with an all-pairs travel-time table, strongly connected
//! component extraction and travel-time clustering of intersections.
//!
//! Intersections carry an external `u64` id (what the graph file uses) and a
//! dense [`Location`] index into the travel-time tables. Dense indices follow
//! ascending external id, so "smallest location id" and "smallest index"
//! agree.

mod cluster;
mod grid;
mod io;
mod paths;

use std::cmp::Reverse;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cluster::{cluster_intersections, ClusterAssignment, ClusterId};
pub use grid::{generate_grid_city, GridSpec};

/// Dense index of an intersection inside one [`RoadNetwork`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Location(pub u32);

impl Location {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An intersection as it appears in input: external id plus optional
/// `(lat, lon)` coordinate used for snapping trip records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: u64,
    pub coord: Option<(f64, f64)>,
}

/// A directed road segment between two external ids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeSpec {
    pub from: u64,
    pub to: u64,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub from: Location,
    pub to: Location,
    pub seconds: f64,
}

/// Weighted directed road graph plus its precomputed shortest-path tables.
///
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    ids: Vec<u64>,
    by_id: HashMap<u64, Location>,
    coords: Vec<Option<(f64, f64)>>,
    /// Sorted by `(from, to)`.
    edges: Vec<Edge>,
    /// CSR offsets into `edges`, one slot per node plus a sentinel.
    out_start: Vec<usize>,
    times: Vec<f64>,
    next_hop: Vec<u32>,
}

impl RoadNetwork {
    /// Builds a network and its all-pairs tables.
    ///
    /// Node ids must be unique; every edge must join two known, distinct nodes
    /// with a finite positive travel time. Parallel edges keep the fastest.
    pub fn new(mut nodes: Vec<NodeSpec>, edges: Vec<EdgeSpec>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        if let Some(w) = nodes.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::invalid(format!("duplicate node id {}", w[0].id)));
        }
        let ids: Vec<u64> = nodes.iter().map(|n| n.id).collect();
        let coords = nodes.iter().map(|n| n.coord).collect();
        let by_id: HashMap<u64, Location> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, Location(i as u32)))
            .collect();

        let mut fastest: HashMap<(Location, Location), f64> = HashMap::with_capacity(edges.len());
        for e in &edges {
            let from = *by_id
                .get(&e.from)
                .ok_or_else(|| Error::invalid(format!("edge references unknown node {}", e.from)))?;
            let to = *by_id
                .get(&e.to)
                .ok_or_else(|| Error::invalid(format!("edge references unknown node {}", e.to)))?;
            if from == to {
                return Err(Error::invalid(format!("self-loop on node {}", e.from)));
            }
            if !(e.seconds.is_finite() && e.seconds > 0.0) {
                return Err(Error::invalid(format!(
                    "edge {} -> {} has non-positive travel time {}",
                    e.from, e.to, e.seconds
                )));
            }
            fastest
                .entry((from, to))
                .and_modify(|s| *s = s.min(e.seconds))
                .or_insert(e.seconds);
        }
        let mut edges: Vec<Edge> = fastest
            .into_iter()
            .map(|((from, to), seconds)| Edge { from, to, seconds })
            .collect();
        edges.sort_by_key(|e| (e.from, e.to));

        let n = ids.len();
        let mut out_start = vec![0usize; n + 1];
        for e in &edges {
            out_start[e.from.index() + 1] += 1;
        }
        for i in 0..n {
            out_start[i + 1] += out_start[i];
        }

        let mut net = RoadNetwork {
            ids,
            by_id,
            coords,
            edges,
            out_start,
            times: Vec::new(),
            next_hop: Vec::new(),
        };
        let (times, next_hop) = paths::all_pairs(&net);
        net.times = times;
        net.next_hop = next_hop;
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn locations(&self) -> impl ExactSizeIterator<Item = Location> + '_ {
        (0..self.ids.len() as u32).map(Location)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, u: Location) -> &[Edge] {
        &self.edges[self.out_start[u.index()]..self.out_start[u.index() + 1]]
    }

    /// External id of a location.
    pub fn node_id(&self, loc: Location) -> u64 {
        self.ids[loc.index()]
    }

    /// Dense location for an external id.
    pub fn location(&self, id: u64) -> Result<Location> {
        self.by_id
            .get(&id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown location id {id}")))
    }

    pub fn contains(&self, loc: Location) -> bool {
        loc.index() < self.ids.len()
    }

    pub fn coord(&self, loc: Location) -> Option<(f64, f64)> {
        self.coords[loc.index()]
    }

    /// Shortest-path travel time in seconds; `INFINITY` when unreachable.
    ///
    /// Hot path; callers guarantee both locations belong to this network.
    #[inline]
    pub fn time(&self, u: Location, v: Location) -> f64 {
        self.times[u.index() * self.ids.len() + v.index()]
    }

    /// Checked version of [`RoadNetwork::time`].
    pub fn travel_time(&self, u: Location, v: Location) -> Result<f64> {
        for loc in [u, v] {
            if !self.contains(loc) {
                return Err(Error::invalid(format!("unknown location {loc}")));
            }
        }
        Ok(self.time(u, v))
    }

    /// First intersection after `u` on the stored shortest path to `v`.
    /// Returns `v` itself when `u == v`.
    #[inline]
    pub fn next_hop(&self, u: Location, v: Location) -> Location {
        Location(self.next_hop[u.index() * self.ids.len() + v.index()])
    }

    /// Intersections visited by the stored shortest path, both ends included.
    pub fn path(&self, u: Location, v: Location) -> Vec<Location> {
        let mut path = vec![u];
        let mut at = u;
        while at != v {
            if !self.time(at, v).is_finite() {
                break;
            }
            at = self.next_hop(at, v);
            path.push(at);
        }
        path
    }

    pub fn is_strongly_connected(&self) -> bool {
        !self.is_empty() && self.times.iter().all(|t| t.is_finite())
    }

    /// Induced subgraph on the largest strongly connected component.
    ///
    /// Ties between equally large components go to the one holding the
    /// smallest location id.
    pub fn largest_scc(&self) -> Result<RoadNetwork> {
        if self.is_empty() {
            return Err(Error::invalid("empty road network"));
        }
        let comp = self.strongly_connected_components();
        let n_comp = comp.iter().copied().max().map_or(0, |c| c + 1);
        let mut size = vec![0usize; n_comp];
        let mut smallest = vec![usize::MAX; n_comp];
        for (v, &c) in comp.iter().enumerate() {
            size[c] += 1;
            smallest[c] = smallest[c].min(v);
        }
        let best = (0..n_comp)
            .min_by_key(|&c| (Reverse(size[c]), smallest[c]))
            .expect("non-empty graph has a component");

        let nodes = (0..self.len())
            .filter(|&v| comp[v] == best)
            .map(|v| NodeSpec {
                id: self.ids[v],
                coord: self.coords[v],
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| comp[e.from.index()] == best && comp[e.to.index()] == best)
            .map(|e| EdgeSpec {
                from: self.ids[e.from.index()],
                to: self.ids[e.to.index()],
                seconds: e.seconds,
            })
            .collect();
        RoadNetwork::new(nodes, edges)
    }

    /// Component label per location (Kosaraju, iterative).
    pub fn strongly_connected_components(&self) -> Vec<usize> {
        let n = self.len();
        // First pass: finishing order on the forward graph.
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for s in 0..n {
            if visited[s] {
                continue;
            }
            visited[s] = true;
            stack.push((s, self.out_start[s]));
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < self.out_start[v + 1] {
                    let w = self.edges[*next].to.index();
                    *next += 1;
                    if !visited[w] {
                        visited[w] = true;
                        stack.push((w, self.out_start[w]));
                    }
                } else {
                    order.push(v);
                    stack.pop();
                }
            }
        }

        // Second pass on the reverse graph in decreasing finish time.
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            rev[e.to.index()].push(e.from.index());
        }
        let mut comp = vec![usize::MAX; n];
        let mut label = 0;
        let mut todo = Vec::new();
        for &s in order.iter().rev() {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = label;
            todo.push(s);
            while let Some(v) = todo.pop() {
                for &w in &rev[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = label;
                        todo.push(w);
                    }
                }
            }
            label += 1;
        }
        comp
    }
}
