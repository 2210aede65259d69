use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::RoadNetwork;

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Min-heap on (dist, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra. Returns distances and, per target, the first hop
/// out of `src` on the chosen path (`src` itself for `src` and unreachable
/// targets).
pub(super) fn single_source(net: &RoadNetwork, src: usize) -> (Vec<f64>, Vec<u32>) {
    let n = net.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut first = vec![src as u32; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Entry { dist: 0.0, node: src as u32 });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        let u = node as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        for e in net.out_edges(super::Location(node)) {
            let v = e.to.index();
            let nd = d + e.seconds;
            if nd < dist[v] {
                dist[v] = nd;
                first[v] = if u == src { v as u32 } else { first[u] };
                heap.push(Entry { dist: nd, node: v as u32 });
            }
        }
    }
    (dist, first)
}

pub(super) fn all_pairs(net: &RoadNetwork) -> (Vec<f64>, Vec<u32>) {
    let n = net.len();
    let rows: Vec<(Vec<f64>, Vec<u32>)> = (0..n)
        .into_par_iter()
        .map(|s| single_source(net, s))
        .collect();
    let mut times = Vec::with_capacity(n * n);
    let mut hops = Vec::with_capacity(n * n);
    for (d, h) in rows {
        times.extend(d);
        hops.extend(h);
    }
    (times, hops)
}
