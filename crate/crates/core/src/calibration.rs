//! Staged search for the mixing weight `lambda` (with `alpha = 0`) and then
//! the kernel exponent `alpha`, each by evaluating full validation episodes
//! at a set of sample points. Zero is always one of the points.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::Request;
use crate::error::{Error, Result};
use crate::simulator::{run_episode, Environment, Mode, SimConfig};
use crate::value_fn::Checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationObjective {
    /// Total requests served.
    Served,
    /// Sum of the chosen assignment scores.
    Assignment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Evenly spaced points.
    Even,
    /// Seeded uniform draws.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub lambda_samples: usize,
    pub alpha_samples: usize,
    pub sampling: Sampling,
    pub seed: u64,
    pub objective: CalibrationObjective,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            lambda_samples: 11,
            alpha_samples: 21,
            sampling: Sampling::Even,
            seed: 0,
            objective: CalibrationObjective::Served,
        }
    }
}

/// Sample points in `(-1, 1)` for `lambda`, plus zero.
pub fn lambda_candidates(n: usize, sampling: Sampling, seed: u64) -> Result<Vec<f64>> {
    candidates(n, -1.0, 1.0, true, sampling, seed)
}

/// Sample points in `[-10, 10]` for `alpha`, plus zero.
pub fn alpha_candidates(n: usize, sampling: Sampling, seed: u64) -> Result<Vec<f64>> {
    candidates(n, -10.0, 10.0, false, sampling, seed)
}

fn candidates(n: usize, lo: f64, hi: f64, open: bool, sampling: Sampling, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("search needs at least one sample"));
    }
    let mut pts: Vec<f64> = match sampling {
        Sampling::Even if open => (0..n).map(|i| lo + (hi - lo) * (i + 1) as f64 / (n + 1) as f64).collect(),
        Sampling::Even if n == 1 => vec![0.5 * (lo + hi)],
        Sampling::Even => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        Sampling::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| loop {
                    let x = rng.random_range(lo..hi);
                    if !open || x > lo {
                        break x;
                    }
                })
                .collect()
        }
    };
    pts.push(0.0);
    Ok(pts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: f64,
    pub best_objective: f64,
    /// `(value, objective)` for each distinct candidate, ascending by value.
    pub records: Vec<(f64, f64)>,
}

/// Evaluates each distinct candidate (in parallel) and returns the maximiser;
/// ties go to the candidate closest to zero, then the smaller one.
pub fn linear_search<F>(candidates: &[f64], eval: F) -> Result<SearchResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mut pts: Vec<f64> = candidates.to_vec();
    if pts.is_empty() {
        return Err(Error::invalid("search needs at least one sample"));
    }
    if let Some(bad) = pts.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite candidate {bad}")));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let objectives: Vec<f64> = pts.par_iter().map(|&x| eval(x)).collect::<Result<_>>()?;
    let records: Vec<(f64, f64)> = pts.into_iter().zip(objectives).collect();
    let &(best, best_objective) = records
        .iter()
        .reduce(|a, b| {
            let better = b.1 > a.1 || (b.1 == a.1 && (b.0.abs() < a.0.abs() || (b.0.abs() == a.0.abs() && b.0 < a.0)));
            if better {
                b
            } else {
                a
            }
        })
        .expect("non-empty");
    Ok(SearchResult {
        best,
        best_objective,
        records,
    })
}

/// Validation objective of `sim` summed over the demand paths.
pub fn evaluate(env: &Environment, sim: &SimConfig, value: Option<&Checkpoint>, validation: &[Vec<Request>], objective: CalibrationObjective) -> Result<f64> {
    let per_path: Vec<f64> = validation
        .par_iter()
        .map(|reqs| {
            let m = run_episode(env, sim, value, reqs)?;
            Ok(match objective {
                CalibrationObjective::Served => m.iter().map(|m| m.served as f64).sum(),
                CalibrationObjective::Assignment => m.iter().map(|m| m.objective).sum(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(per_path.iter().sum())
}

fn cevd_config(sim: &SimConfig, lambda: f64, alpha: f64) -> SimConfig {
    SimConfig {
        mode: Mode::Cevd,
        lambda,
        alpha,
        ..sim.clone()
    }
}

/// Linear search over `lambda` with `alpha = 0`.
pub fn search_lambda(env: &Environment, sim: &SimConfig, value: &Checkpoint, validation: &[Vec<Request>], cfg: &CalibrationConfig) -> Result<SearchResult> {
    let pts = lambda_candidates(cfg.lambda_samples, cfg.sampling, cfg.seed)?;
    linear_search(&pts, |l| evaluate(env, &cevd_config(sim, l, 0.0), Some(value), validation, cfg.objective))
}

/// Linear search over `alpha` with `lambda` fixed.
pub fn search_alpha(
    env: &Environment,
    sim: &SimConfig,
    value: &Checkpoint,
    lambda: f64,
    validation: &[Vec<Request>],
    cfg: &CalibrationConfig,
) -> Result<SearchResult> {
    let pts = alpha_candidates(cfg.alpha_samples, cfg.sampling, cfg.seed.wrapping_add(1))?;
    linear_search(&pts, |a| evaluate(env, &cevd_config(sim, lambda, a), Some(value), validation, cfg.objective))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub lambda: SearchResult,
    pub alpha: SearchResult,
    pub seed: u64,
}

impl CalibrationReport {
    pub fn lambda_star(&self) -> f64 {
        self.lambda.best
    }

    pub fn alpha_star(&self) -> f64 {
        self.alpha.best
    }

    /// CSV `stage,param_value,objective,seed`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("stage,param_value,objective,seed\n");
        for (stage, res) in [("lambda", &self.lambda), ("alpha", &self.alpha)] {
            for (v, o) in &res.records {
                out.push_str(&format!("{stage},{v},{o},{}\n", self.seed));
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Best `(lambda, alpha)` from a CSV written by [`CalibrationReport::write_csv`],
    /// using the same tie-breaking as the search.
    pub fn read_best(path: &Path) -> Result<(f64, f64)> {
        #[derive(Deserialize)]
        struct Row {
            stage: String,
            param_value: f64,
            objective: f64,
        }
        let mut lambda = Vec::new();
        let mut alpha = Vec::new();
        let mut r = csv::Reader::from_path(path)?;
        for row in r.deserialize() {
            let row: Row = row?;
            match row.stage.as_str() {
                "lambda" => lambda.push((row.param_value, row.objective)),
                "alpha" => alpha.push((row.param_value, row.objective)),
                s => return Err(Error::invalid(format!("{}: unknown stage `{s}`", path.display()))),
            }
        }
        let pick = |recs: &[(f64, f64)]| -> Result<f64> {
            let objectives: std::collections::HashMap<u64, f64> = recs.iter().map(|(v, o)| (v.to_bits(), *o)).collect();
            let pts: Vec<f64> = recs.iter().map(|r| r.0).collect();
            Ok(linear_search(&pts, |v| Ok(objectives[&v.to_bits()]))?.best)
        };
        Ok((pick(&lambda)?, pick(&alpha)?))
    }
}

/// Both stages in order.
pub fn calibrate(env: &Environment, sim: &SimConfig, value: &Checkpoint, validation: &[Vec<Request>], cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    let lambda = search_lambda(env, sim, value, validation, cfg)?;
    log::info!("lambda* = {} (objective {})", lambda.best, lambda.best_objective);
    let alpha = search_alpha(env, sim, value, lambda.best, validation, cfg)?;
    log::info!("alpha* = {} (objective {})", alpha.best, alpha.best_objective);
    Ok(CalibrationReport {
        lambda,
        alpha,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_always_included() {
        let l = lambda_candidates(11, Sampling::Even, 0).unwrap();
        assert!(l.contains(&0.0));
        assert!(l.iter().all(|x| *x > -1.0 && *x < 1.0));
        assert_eq!(lambda_candidates(1, Sampling::Even, 0).unwrap(), vec![0.0, 0.0]);
        let a = alpha_candidates(21, Sampling::Even, 0).unwrap();
        assert_eq!(a[0], -10.0);
        assert_eq!(a[20], 10.0);
        let u = alpha_candidates(5, Sampling::Uniform, 3).unwrap();
        assert_eq!(u, alpha_candidates(5, Sampling::Uniform, 3).unwrap());
        assert!(u.contains(&0.0));
        assert!(lambda_candidates(0, Sampling::Even, 0).is_err());
    }

    #[test]
    fn argmax_and_ties() {
        let r = linear_search(&[-0.5, 0.0, 0.5, 0.25], |x| Ok(-(x - 0.3f64).powi(2))).unwrap();
        assert_eq!(r.best, 0.25);
        let flat = linear_search(&[-2.0, 3.0, 0.0, 1.0], |_| Ok(7.0)).unwrap();
        assert_eq!(flat.best, 0.0);
        let sym = linear_search(&[-1.0, 1.0], |_| Ok(1.0)).unwrap();
        assert_eq!(sym.best, -1.0);
    }

    #[test]
    fn duplicates_do_not_matter() {
        let f = |x: f64| Ok((x * 3.0).sin());
        let a = linear_search(&[0.1, 0.2, 0.2, 0.7, 0.1], f).unwrap();
        let b = linear_search(&[0.1, 0.2, 0.7], f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_csv_round_trip() {
        let report = CalibrationReport {
            lambda: linear_search(&[-0.5, 0.0, 0.5], |x| Ok(if x == 0.5 { 3.0 } else { 1.0 })).unwrap(),
            alpha: linear_search(&[-3.0, 0.0, 2.0], |x| Ok(if x == -3.0 { 5.0 } else { 4.0 })).unwrap(),
            seed: 4,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cal.csv");
        report.write_csv(&p).unwrap();
        assert_eq!(CalibrationReport::read_best(&p).unwrap(), (0.5, -3.0));
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("stage,param_value,objective,seed\nlambda,-0.5,1,4\n"));
    }
}
