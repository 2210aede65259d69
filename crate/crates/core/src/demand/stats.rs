use std::io::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// `series[t][k]`: request count released in epoch `t` from cluster `k`.
pub type DemandSeries = Vec<Vec<f64>>;

/// Expected discounted future demand
/// `F_t = mean_paths sum_{s=0}^{min(window, last - t)} gamma^s g_{t+s}`, per cluster.
///
/// All paths must share epoch count and cluster count.
pub fn compute_future_demand(paths: &[DemandSeries], gamma: f64, window: usize) -> Result<DemandSeries> {
    let first = paths
        .first()
        .ok_or_else(|| Error::invalid("future demand needs at least one sample path"))?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("discount {gamma} outside [0, 1)")));
    }
    let epochs = first.len();
    let k = first.first().map_or(0, Vec::len);
    for p in paths {
        if p.len() != epochs || p.iter().any(|g| g.len() != k) {
            return Err(Error::invalid("demand sample paths differ in shape"));
        }
    }
    let mut out = vec![vec![0.0; k]; epochs];
    let mut acc = vec![0.0; k];
    for path in paths {
        for (t, row) in out.iter_mut().enumerate() {
            let last = (t + window).min(epochs.saturating_sub(1));
            // Horner evaluation from the far end of the window.
            acc.iter_mut().for_each(|a| *a = 0.0);
            for s in (t..=last).rev() {
                for (a, g) in acc.iter_mut().zip(&path[s]) {
                    *a = *a * gamma + g;
                }
            }
            for (o, a) in row.iter_mut().zip(&acc) {
                *o += a;
            }
        }
    }
    let n = paths.len() as f64;
    out.iter_mut().flatten().for_each(|v| *v /= n);
    Ok(out)
}

/// Exogenous demand information consumed by the value function:
/// historical mean current demand `g` and discounted future demand `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandStats {
    pub gamma: f64,
    pub window: usize,
    pub g: DemandSeries,
    pub future: DemandSeries,
}

impl DemandStats {
    pub fn from_paths(paths: &[DemandSeries], gamma: f64, window: usize) -> Result<Self> {
        let future = compute_future_demand(paths, gamma, window)?;
        // Mean of g is F with a zero-length window.
        let g = compute_future_demand(paths, 0.0, 0)?;
        Ok(DemandStats {
            gamma,
            window,
            g,
            future,
        })
    }

    /// All-zero statistics, used when no history is available.
    pub fn empty(k: usize, epochs: usize, gamma: f64, window: usize) -> Self {
        DemandStats {
            gamma,
            window,
            g: vec![vec![0.0; k]; epochs],
            future: vec![vec![0.0; k]; epochs],
        }
    }

    pub fn epochs(&self) -> usize {
        self.g.len()
    }

    pub fn k(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }

    /// `F_t`; zero past the recorded horizon.
    pub fn future_at(&self, epoch: usize) -> Option<&[f64]> {
        self.future.get(epoch).map(Vec::as_slice)
    }

    /// Largest per-cluster mean count, floored at 1; used to normalise `g`.
    pub fn g_scale(&self) -> f64 {
        self.g.iter().flatten().copied().fold(1.0, f64::max)
    }

    /// Largest per-cluster `F` entry, floored at 1.
    pub fn future_scale(&self) -> f64 {
        self.future.iter().flatten().copied().fold(1.0, f64::max)
    }

    /// CSV `epoch,cluster,g,F`. The discount and window are kept in a
    /// leading comment line so the cache is self-describing.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "# gamma={} window={}", self.gamma, self.window).map_err(io)?;
        writeln!(w, "epoch,cluster,g,F").map_err(io)?;
        for (t, (g, f)) in self.g.iter().zip(&self.future).enumerate() {
            for (k, (gv, fv)) in g.iter().zip(f).enumerate() {
                writeln!(w, "{t},{k},{gv},{fv}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            epoch: usize,
            cluster: usize,
            g: f64,
            #[serde(rename = "F")]
            future: f64,
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (meta, body) = text.split_once('\n').unwrap_or(("", ""));
        let mut gamma = None;
        let mut window = None;
        for part in meta.trim_start_matches('#').split_whitespace() {
            match part.split_once('=') {
                Some(("gamma", v)) => gamma = v.parse().ok(),
                Some(("window", v)) => window = v.parse().ok(),
                _ => {}
            }
        }
        let (Some(gamma), Some(window)) = (gamma, window) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "missing `# gamma=.. window=..` header".into(),
            });
        };
        let mut rows: Vec<Row> = Vec::new();
        for row in csv::Reader::from_reader(body.as_bytes()).deserialize() {
            rows.push(row?);
        }
        let epochs = rows.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
        let k = rows.iter().map(|r| r.cluster + 1).max().unwrap_or(0);
        if rows.len() != epochs * k {
            return Err(Error::invalid(format!("{}: incomplete demand table", path.display())));
        }
        let mut g = vec![vec![0.0; k]; epochs];
        let mut future = vec![vec![0.0; k]; epochs];
        for r in rows {
            g[r.epoch][r.cluster] = r.g;
            future[r.epoch][r.cluster] = r.future;
        }
        Ok(DemandStats {
            gamma,
            window,
            g,
            future,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_fixture() {
        let g = vec![vec![1.0], vec![1.0], vec![1.0]];
        let f = compute_future_demand(&[g], 0.5, 1000).unwrap();
        assert_eq!(f, vec![vec![1.75], vec![1.5], vec![1.0]]);
    }

    #[test]
    fn zero_discount_is_mean_current_demand() {
        let a = vec![vec![1.0, 4.0], vec![3.0, 0.0]];
        let b = vec![vec![3.0, 2.0], vec![5.0, 2.0]];
        let f = compute_future_demand(&[a, b], 0.0, 10).unwrap();
        assert_eq!(f, vec![vec![2.0, 3.0], vec![4.0, 1.0]]);
    }

    #[test]
    fn finite_window_truncates() {
        let g = vec![vec![1.0]; 4];
        let f = compute_future_demand(&[g], 0.5, 1).unwrap();
        assert_eq!(f, vec![vec![1.5], vec![1.5], vec![1.5], vec![1.0]]);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(compute_future_demand(&[], 0.5, 3).is_err());
        assert!(compute_future_demand(&[vec![vec![1.0]]], 1.0, 3).is_err());
        let a = vec![vec![1.0]; 3];
        let b = vec![vec![1.0]; 2];
        assert!(compute_future_demand(&[a, b], 0.5, 3).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let paths = vec![vec![vec![1.0, 2.5], vec![0.0, 7.0], vec![3.0, 1.0]]];
        let stats = DemandStats::from_paths(&paths, 0.9, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stats.csv");
        stats.write_csv(&p).unwrap();
        assert_eq!(DemandStats::read_csv(&p).unwrap(), stats);
    }
}
