//! Partition of intersections into travel-time clusters.
//!
//! Travel-time space is not Euclidean, so clustering is K-medoids over the
//! symmetrised dissimilarity `(t(u,v) + t(v,u)) / 2`: deterministic
//! farthest-first seeding from the smallest location, then eager swap
//! descent that scans candidate medoids in a seeded order.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Location, RoadNetwork};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl ClusterId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ClusterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    k: usize,
    cluster_of: Vec<ClusterId>,
    members: Vec<Vec<Location>>,
    medoids: Vec<Location>,
    /// Row-major `k x k` mean travel times.
    distance: Vec<f64>,
}

fn dissimilarity(net: &RoadNetwork, u: usize, v: usize) -> f64 {
    0.5 * (net.time(Location(u as u32), Location(v as u32))
        + net.time(Location(v as u32), Location(u as u32)))
}

/// K-medoids clustering of `net` into `k` clusters; deterministic in `seed`.
pub fn cluster_intersections(net: &RoadNetwork, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = net.len();
    if k == 0 {
        return Err(Error::invalid("cluster count must be positive"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "cluster count {k} exceeds {n} intersections"
        )));
    }
    if !net.is_strongly_connected() {
        return Err(Error::invalid(
            "clustering needs a strongly connected network (use largest_scc)",
        ));
    }
    let d = |u: usize, v: usize| dissimilarity(net, u, v);
    let medoids = if k == 1 {
        vec![one_median(n, &d)]
    } else {
        swap_descent(n, k, seed, &d)
    };
    Ok(ClusterAssignment::from_medoids(net, medoids))
}

fn one_median(n: usize, d: &impl Fn(usize, usize) -> f64) -> usize {
    let cost = |h: usize| (0..n).map(|o| d(o, h)).sum::<f64>();
    (0..n)
        .map(|h| (h, cost(h)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(h, _)| h)
        .expect("n > 0")
}

struct Nearest {
    near: Vec<usize>,
    dnear: Vec<f64>,
    dsec: Vec<f64>,
}

fn nearest(n: usize, medoids: &[usize], d: &impl Fn(usize, usize) -> f64) -> Nearest {
    let mut out = Nearest {
        near: vec![0; n],
        dnear: vec![f64::INFINITY; n],
        dsec: vec![f64::INFINITY; n],
    };
    for o in 0..n {
        for (m, &med) in medoids.iter().enumerate() {
            let dist = d(o, med);
            if dist < out.dnear[o] {
                out.dsec[o] = out.dnear[o];
                out.dnear[o] = dist;
                out.near[o] = m;
            } else if dist < out.dsec[o] {
                out.dsec[o] = dist;
            }
        }
    }
    out
}

fn swap_descent(n: usize, k: usize, seed: u64, d: &impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // Farthest-first seeding.
    let mut medoids = vec![0usize];
    let mut is_medoid = vec![false; n];
    is_medoid[0] = true;
    let mut dmin: Vec<f64> = (0..n).map(|o| d(o, 0)).collect();
    while medoids.len() < k {
        let next = (0..n)
            .filter(|&o| !is_medoid[o])
            .max_by(|&a, &b| dmin[a].total_cmp(&dmin[b]).then(b.cmp(&a)))
            .expect("k <= n");
        medoids.push(next);
        is_medoid[next] = true;
        for o in 0..n {
            dmin[o] = dmin[o].min(d(o, next));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut nn = nearest(n, &medoids, d);
    let mut delta = vec![0.0; k];
    loop {
        let mut improved = false;
        for &h in &order {
            if is_medoid[h] {
                continue;
            }
            // Removal loss per medoid, then the effect of adding `h`.
            delta.iter_mut().for_each(|x| *x = 0.0);
            for o in 0..n {
                delta[nn.near[o]] += nn.dsec[o] - nn.dnear[o];
            }
            let mut shared = 0.0;
            for o in 0..n {
                let doh = d(o, h);
                if doh < nn.dnear[o] {
                    shared += doh - nn.dnear[o];
                    delta[nn.near[o]] += nn.dnear[o] - nn.dsec[o];
                } else if doh < nn.dsec[o] {
                    delta[nn.near[o]] += doh - nn.dsec[o];
                }
            }
            let (m, best) = delta
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .map(|(m, &v)| (m, v + shared))
                .expect("k > 0");
            let objective: f64 = nn.dnear.iter().sum();
            if best < -1e-9 * objective.max(1.0) {
                is_medoid[medoids[m]] = false;
                medoids[m] = h;
                is_medoid[h] = true;
                nn = nearest(n, &medoids, d);
                improved = true;
            }
        }
        if !improved {
            return medoids;
        }
    }
}

impl ClusterAssignment {
    /// Assigns every intersection to its nearest medoid. Cluster ids follow
    /// ascending medoid location; ties go to the lower cluster id.
    pub fn from_medoids(net: &RoadNetwork, mut medoids: Vec<usize>) -> ClusterAssignment {
        medoids.sort_unstable();
        medoids.dedup();
        let n = net.len();
        let cluster_of: Vec<ClusterId> = (0..n)
            .map(|o| {
                let (best, _) = medoids.iter().enumerate().fold(
                    (0usize, f64::INFINITY),
                    |(bi, bd), (i, &m)| {
                        let dist = dissimilarity(net, o, m);
                        if dist < bd {
                            (i, dist)
                        } else {
                            (bi, bd)
                        }
                    },
                );
                ClusterId(best as u32)
            })
            .collect();
        let medoids = medoids.into_iter().map(|m| Location(m as u32)).collect();
        Self::build(net, cluster_of, Some(medoids))
    }

    /// Rebuilds an assignment from an explicit mapping (e.g. a CSV file).
    /// Cluster ids must be dense in `0..k`; medoids are recomputed as each
    /// cluster's travel-time 1-median.
    pub fn from_mapping(net: &RoadNetwork, cluster_of: Vec<ClusterId>) -> Result<ClusterAssignment> {
        if cluster_of.len() != net.len() {
            return Err(Error::invalid(format!(
                "mapping covers {} of {} intersections",
                cluster_of.len(),
                net.len()
            )));
        }
        let k = cluster_of.iter().map(|c| c.index() + 1).max().unwrap_or(0);
        let mut seen = vec![false; k];
        for c in &cluster_of {
            seen[c.index()] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("cluster {empty} is empty")));
        }
        Ok(Self::build(net, cluster_of, None))
    }

    fn build(net: &RoadNetwork, cluster_of: Vec<ClusterId>, medoids: Option<Vec<Location>>) -> Self {
        let k = cluster_of.iter().map(|c| c.index() + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); k];
        for (v, c) in cluster_of.iter().enumerate() {
            members[c.index()].push(Location(v as u32));
        }
        let medoids = medoids.unwrap_or_else(|| {
            members
                .iter()
                .map(|ms| {
                    *ms.iter()
                        .min_by(|a, b| {
                            let ca: f64 = ms.iter().map(|o| dissimilarity(net, o.index(), a.index())).sum();
                            let cb: f64 = ms.iter().map(|o| dissimilarity(net, o.index(), b.index())).sum();
                            ca.total_cmp(&cb).then(a.cmp(b))
                        })
                        .expect("clusters are non-empty")
                })
                .collect()
        });
        let mut distance = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                let mut sum = 0.0;
                for &u in &members[a] {
                    for &v in &members[b] {
                        sum += net.time(u, v);
                    }
                }
                distance[a * k + b] = sum / (members[a].len() * members[b].len()) as f64;
            }
        }
        ClusterAssignment {
            k,
            cluster_of,
            members,
            medoids,
            distance,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn cluster_of(&self, loc: Location) -> ClusterId {
        self.cluster_of[loc.index()]
    }

    pub fn mapping(&self) -> &[ClusterId] {
        &self.cluster_of
    }

    pub fn members(&self, c: ClusterId) -> &[Location] {
        &self.members[c.index()]
    }

    pub fn medoids(&self) -> &[Location] {
        &self.medoids
    }

    /// Mean travel time from members of `a` to members of `b`, including
    /// the zero self-pairs when `a == b`.
    pub fn cluster_distance(&self, a: ClusterId, b: ClusterId) -> Result<f64> {
        for c in [a, b] {
            if c.index() >= self.k {
                return Err(Error::invalid(format!("unknown cluster {c}")));
            }
        }
        Ok(self.distance(a, b))
    }

    #[inline]
    pub fn distance(&self, a: ClusterId, b: ClusterId) -> f64 {
        self.distance[a.index() * self.k + b.index()]
    }

    pub fn max_distance(&self) -> f64 {
        self.distance.iter().copied().fold(0.0, f64::max)
    }

    /// Sum over intersections of the symmetrised travel time to their
    /// cluster's medoid.
    pub fn objective(&self, net: &RoadNetwork) -> f64 {
        self.cluster_of
            .iter()
            .enumerate()
            .map(|(v, c)| dissimilarity(net, v, self.medoids[c.index()].index()))
            .sum()
    }

    /// CSV `location_id,cluster_id` using external location ids.
    pub fn write_csv(&self, net: &RoadNetwork, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "location_id,cluster_id").map_err(io)?;
        for (v, c) in self.cluster_of.iter().enumerate() {
            writeln!(w, "{},{}", net.node_id(Location(v as u32)), c).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(net: &RoadNetwork, path: &Path) -> Result<ClusterAssignment> {
        #[derive(Deserialize)]
        struct Row {
            location_id: u64,
            cluster_id: u32,
        }
        let mut reader = csv::Reader::from_path(path)?;
        let mut mapping = vec![None; net.len()];
        for row in reader.deserialize() {
            let row: Row = row?;
            let loc = net.location(row.location_id)?;
            mapping[loc.index()] = Some(ClusterId(row.cluster_id));
        }
        let mapping = mapping
            .into_iter()
            .enumerate()
            .map(|(v, c)| {
                c.ok_or_else(|| {
                    Error::invalid(format!(
                        "{}: location {} has no cluster",
                        path.display(),
                        net.node_id(Location(v as u32))
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ClusterAssignment::from_mapping(net, mapping)
    }
}
