use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EdgeSpec, NodeSpec, RoadNetwork};
use crate::error::{Error, Result};

/// Synthetic Manhattan-style grid city.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Nominal seconds per block.
    pub edge_time: f64,
    /// Relative jitter in `[0, 1)`; each street gets
    /// `edge_time * (1 + jitter * u)` with `u ~ U(-1, 1)`.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 8,
            cols: 8,
            edge_time: 60.0,
            jitter: 0.2,
            seed: 0,
        }
    }
}

/// Spacing between neighbouring intersections, in degrees (~500 m).
const BLOCK_DEGREES: f64 = 0.0045;
const ORIGIN: (f64, f64) = (40.70, -74.02);

/// Bidirectional grid; node `r * cols + c` sits at row `r`, column `c`.
/// Both directions of a street share one travel time, so the graph is
/// symmetric.
pub fn generate_grid_city(spec: &GridSpec) -> Result<RoadNetwork> {
    if spec.rows < 2 || spec.cols < 2 {
        return Err(Error::invalid("grid needs at least 2 rows and 2 columns"));
    }
    if !(spec.edge_time.is_finite() && spec.edge_time > 0.0) {
        return Err(Error::invalid("edge_time must be positive"));
    }
    if !(0.0..1.0).contains(&spec.jitter) {
        return Err(Error::invalid("jitter must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let id = |r: usize, c: usize| (r * spec.cols + c) as u64;
    let mut nodes = Vec::with_capacity(spec.rows * spec.cols);
    let mut edges = Vec::new();
    let street = |rng: &mut ChaCha8Rng, a: u64, b: u64, edges: &mut Vec<EdgeSpec>| {
        let seconds = if spec.jitter == 0.0 {
            spec.edge_time
        } else {
            spec.edge_time * (1.0 + spec.jitter * rng.random_range(-1.0..1.0))
        };
        edges.push(EdgeSpec { from: a, to: b, seconds });
        edges.push(EdgeSpec { from: b, to: a, seconds });
    };
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            nodes.push(NodeSpec {
                id: id(r, c),
                coord: Some((
                    ORIGIN.0 + r as f64 * BLOCK_DEGREES,
                    ORIGIN.1 + c as f64 * BLOCK_DEGREES,
                )),
            });
            if c + 1 < spec.cols {
                street(&mut rng, id(r, c), id(r, c + 1), &mut edges);
            }
            if r + 1 < spec.rows {
                street(&mut rng, id(r, c), id(r + 1, c), &mut edges);
            }
        }
    }
    RoadNetwork::new(nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_structure() {
        let net = generate_grid_city(&GridSpec {
            rows: 2,
            cols: 2,
            ..GridSpec::default()
        })
        .unwrap();
        assert_eq!(net.len(), 4);
        assert_eq!(net.edges().len(), 8);
        assert!(net.is_strongly_connected());
    }

    #[test]
    fn zero_jitter_is_exact() {
        let net = generate_grid_city(&GridSpec {
            rows: 4,
            cols: 3,
            edge_time: 45.0,
            jitter: 0.0,
            seed: 9,
        })
        .unwrap();
        assert!(net.edges().iter().all(|e| e.seconds == 45.0));
    }

    #[test]
    fn serialization_is_deterministic() {
        let spec = GridSpec {
            rows: 5,
            cols: 5,
            seed: 17,
            ..GridSpec::default()
        };
        let a = generate_grid_city(&spec).unwrap().to_text();
        let b = generate_grid_city(&spec).unwrap().to_text();
        assert_eq!(a.as_bytes(), b.as_bytes());
        let other = generate_grid_city(&GridSpec { seed: 18, ..spec }).unwrap().to_text();
        assert_ne!(a, other);
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(generate_grid_city(&GridSpec {
            rows: 1,
            ..GridSpec::default()
        })
        .is_err());
    }
}
