//! Neighbour-aware action scoring.
//!
//! Vehicle `i` in cluster `C_k` taking action `f` gets
//!
//! ```text
//! Vhat = (V_if + lambda * mean_{j in C_k, j != i} sum_g P_j(g | f) V_jg) / (1 + lambda)
//! P_j(g | f) ∝ exp(alpha * d(c(g), c(f)) / scale)
//! ```
//!
//! where `c(.)` is the action's cluster and `d` the mean inter-cluster travel
//! time. `scale` keeps the exponent bounded (the default is the largest
//! cluster distance); with `scale = 1` distances enter in raw seconds.
//! A vehicle alone in its cluster keeps `Vhat = V`.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::road_network::{ClusterAssignment, ClusterId};

/// Precomputed unnormalised weights `W[a][b] = exp(alpha * d(a, b) / scale)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    k: usize,
    alpha: f64,
    scale: f64,
    w: Vec<f64>,
}

impl Kernel {
    pub fn new(clusters: &ClusterAssignment, alpha: f64, scale: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha must be finite, got {alpha}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("kernel scale must be positive, got {scale}")));
        }
        let k = clusters.k();
        let mut w = Vec::with_capacity(k * k);
        for a in 0..k {
            for b in 0..k {
                w.push((alpha * clusters.distance(ClusterId(a as u32), ClusterId(b as u32)) / scale).exp());
            }
        }
        if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "kernel weight {bad} out of range; lower |alpha| or raise the scale"
            )));
        }
        Ok(Kernel { k, alpha, scale, w })
    }

    /// Largest inter-cluster distance, or 1 when every distance is zero.
    pub fn default_scale(clusters: &ClusterAssignment) -> f64 {
        let m = clusters.max_distance();
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn weight(&self, a: ClusterId, b: ClusterId) -> f64 {
        self.w[a.index() * self.k + b.index()]
    }
}

/// Distribution over a neighbour's actions given the clusters of those
/// actions and the cluster of the conditioning action.
pub fn conditional_probs(kernel: &Kernel, f_cluster: ClusterId, neighbor_clusters: &[ClusterId]) -> Result<Vec<f64>> {
    if neighbor_clusters.is_empty() {
        return Err(Error::invalid("neighbour has no actions"));
    }
    let w: Vec<f64> = neighbor_clusters.iter().map(|&g| kernel.weight(g, f_cluster)).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CevdParams {
    pub lambda: f64,
    pub gamma: f64,
}

impl CevdParams {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda == -1.0 {
            return Err(Error::InvalidConfig(format!("lambda {lambda} makes the mixing weight undefined")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("discount {gamma} outside [0, 1)")));
        }
        Ok(CevdParams { lambda, gamma })
    }
}

/// One vehicle's row of the value table.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleValues {
    /// Cluster of the vehicle's current position; defines its neighbours.
    pub home: ClusterId,
    pub rewards: Vec<f64>,
    pub clusters: Vec<ClusterId>,
    pub values: Vec<f64>,
}

fn check_table(table: &[VehicleValues], kernel: &Kernel) -> Result<()> {
    for (i, v) in table.iter().enumerate() {
        if v.rewards.is_empty() || v.values.len() != v.rewards.len() || v.clusters.len() != v.rewards.len() {
            return Err(Error::invalid(format!(
                "vehicle {i}: {} rewards, {} values, {} clusters",
                v.rewards.len(),
                v.values.len(),
                v.clusters.len()
            )));
        }
        if v.home.index() >= kernel.k() || v.clusters.iter().any(|c| c.index() >= kernel.k()) {
            return Err(Error::invalid(format!("vehicle {i}: cluster id out of range")));
        }
    }
    Ok(())
}

/// Direct evaluation of `Vhat` for one `(vehicle, action)` pair.
pub fn cevd_value(i: usize, f: usize, table: &[VehicleValues], kernel: &Kernel, lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda == -1.0 {
        return Err(Error::InvalidConfig(format!("lambda {lambda} makes the mixing weight undefined")));
    }
    check_table(table, kernel)?;
    let me = table.get(i).ok_or_else(|| Error::invalid(format!("unknown vehicle {i}")))?;
    let v = *me.values.get(f).ok_or_else(|| Error::invalid(format!("vehicle {i} has no action {f}")))?;
    let neighbours: Vec<&VehicleValues> = table
        .iter()
        .enumerate()
        .filter(|&(j, o)| j != i && o.home == me.home)
        .map(|(_, o)| o)
        .collect();
    if neighbours.is_empty() || lambda == 0.0 {
        return Ok(v);
    }
    let mut total = 0.0;
    for n in &neighbours {
        let p = conditional_probs(kernel, me.clusters[f], &n.clusters)?;
        total += p.iter().zip(&n.values).map(|(p, v)| p * v).sum::<f64>();
    }
    let feedback = total / neighbours.len() as f64;
    Ok((v + lambda * feedback) / (1.0 + lambda))
}

/// `Vhat` for every entry of the table, sharing per-cluster sums.
pub fn cevd_values(table: &[VehicleValues], kernel: &Kernel, lambda: f64) -> Result<Vec<Vec<f64>>> {
    if !lambda.is_finite() || lambda == -1.0 {
        return Err(Error::InvalidConfig(format!("lambda {lambda} makes the mixing weight undefined")));
    }
    check_table(table, kernel)?;
    if lambda == 0.0 {
        return Ok(table.iter().map(|v| v.values.clone()).collect());
    }
    let mut groups: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
    for (i, v) in table.iter().enumerate() {
        groups.entry(v.home).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let per_group: Vec<Vec<(usize, Vec<f64>)>> = groups
        .par_iter()
        .map(|members| {
            if members.len() == 1 {
                let i = members[0];
                return vec![(i, table[i].values.clone())];
            }
            // Per member: value sum and action count per action cluster.
            let aggregates: Vec<Vec<(ClusterId, f64, f64)>> = members
                .iter()
                .map(|&j| {
                    let mut by: BTreeMap<ClusterId, (f64, f64)> = BTreeMap::new();
                    for (c, v) in table[j].clusters.iter().zip(&table[j].values) {
                        let e = by.entry(*c).or_insert((0.0, 0.0));
                        e.0 += v;
                        e.1 += 1.0;
                    }
                    by.into_iter().map(|(c, (s, n))| (c, s, n)).collect()
                })
                .collect();
            let mut targets: Vec<ClusterId> = members.iter().flat_map(|&i| table[i].clusters.iter().copied()).collect();
            targets.sort_unstable();
            targets.dedup();
            // expected[m][t]: member m's expected value given target cluster t.
            let expected: Vec<Vec<f64>> = aggregates
                .iter()
                .map(|agg| {
                    targets
                        .iter()
                        .map(|&c| {
                            let (mut num, mut den) = (0.0, 0.0);
                            for &(g, s, n) in agg {
                                let w = kernel.weight(g, c);
                                num += w * s;
                                den += w * n;
                            }
                            num / den
                        })
                        .collect()
                })
                .collect();
            let totals: Vec<f64> = (0..targets.len()).map(|t| expected.iter().map(|e| e[t]).sum()).collect();
            let others = (members.len() - 1) as f64;
            members
                .iter()
                .enumerate()
                .map(|(m, &i)| {
                    let row = &table[i];
                    let vhat = row
                        .values
                        .iter()
                        .zip(&row.clusters)
                        .map(|(v, c)| {
                            let t = targets.binary_search(c).expect("target collected above");
                            let feedback = (totals[t] - expected[m][t]) / others;
                            (v + lambda * feedback) / (1.0 + lambda)
                        })
                        .collect();
                    (i, vhat)
                })
                .collect()
        })
        .collect();
    let mut out = vec![Vec::new(); table.len()];
    for (i, row) in per_group.into_iter().flatten() {
        out[i] = row;
    }
    Ok(out)
}

/// ILP coefficients `J + gamma * Vhat`, plus the `Vhat` table itself.
pub fn score_all(table: &[VehicleValues], kernel: &Kernel, params: &CevdParams) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let vhat = cevd_values(table, kernel, params.lambda)?;
    let scores = table
        .iter()
        .zip(&vhat)
        .map(|(row, vh)| row.rewards.iter().zip(vh).map(|(j, v)| j + params.gamma * v).collect())
        .collect();
    Ok((scores, vhat))
}

/// Debug dump: CSV `vehicle,action_index,J,V,Vhat,score`.
pub fn write_scores_csv(path: &Path, table: &[VehicleValues], vhat: &[Vec<f64>], scores: &[Vec<f64>]) -> Result<()> {
    let mut out = String::from("vehicle,action_index,J,V,Vhat,score\n");
    for (i, row) in table.iter().enumerate() {
        for f in 0..row.rewards.len() {
            out.push_str(&format!("{i},{f},{},{},{},{}\n", row.rewards[f], row.values[f], vhat[i][f], scores[i][f]));
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
