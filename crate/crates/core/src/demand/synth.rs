use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::{Request, RequestId};
use crate::error::{Error, Result};
use crate::road_network::{ClusterAssignment, ClusterId, Location, RoadNetwork};

/// Synthetic demand: Poisson arrivals per epoch around `rate_profile`,
/// endpoints drawn cluster-first by weight, then uniformly inside the cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    /// Expected request count per epoch; its length is the horizon.
    pub rate_profile: Vec<f64>,
    /// Per-cluster origin weights; uniform when absent.
    #[serde(default)]
    pub origin_weights: Option<Vec<f64>>,
    /// Per-cluster destination weights; uniform when absent.
    #[serde(default)]
    pub destination_weights: Option<Vec<f64>>,
}

impl DemandModel {
    pub fn constant(rate: f64, horizon: usize) -> Self {
        DemandModel {
            rate_profile: vec![rate; horizon],
            origin_weights: None,
            destination_weights: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.rate_profile.len()
    }
}

fn cluster_sampler(weights: Option<&Vec<f64>>, clusters: &ClusterAssignment) -> Result<WeightedIndex<f64>> {
    let uniform;
    let w = match weights {
        Some(w) => {
            if w.len() != clusters.k() {
                return Err(Error::invalid(format!(
                    "{} cluster weights for {} clusters",
                    w.len(),
                    clusters.k()
                )));
            }
            w
        }
        None => {
            uniform = vec![1.0; clusters.k()];
            &uniform
        }
    };
    WeightedIndex::new(w).map_err(|e| Error::invalid(format!("bad cluster weights: {e}")))
}

/// Draws requests with sequential ids starting at `first_id`; deterministic in `seed`.
pub fn synthesize_demand(
    net: &RoadNetwork,
    clusters: &ClusterAssignment,
    model: &DemandModel,
    seed: u64,
    first_id: u64,
) -> Result<Vec<Request>> {
    if net.len() < 2 {
        return Err(Error::invalid("demand needs at least two intersections"));
    }
    if let Some(bad) = model.rate_profile.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::invalid(format!("rate {bad} is not a non-negative number")));
    }
    let origins = cluster_sampler(model.origin_weights.as_ref(), clusters)?;
    let destinations = cluster_sampler(model.destination_weights.as_ref(), clusters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, dist: &WeightedIndex<f64>| -> Location {
        let members = clusters.members(ClusterId(dist.sample(rng) as u32));
        members[rng.random_range(0..members.len())]
    };

    let mut out = Vec::new();
    let mut id = first_id;
    for (epoch, &rate) in model.rate_profile.iter().enumerate() {
        let count = if rate > 0.0 {
            let poisson = Poisson::new(rate).map_err(|e| Error::invalid(format!("rate {rate}: {e}")))?;
            poisson.sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..count {
            let origin = pick(&mut rng, &origins);
            let destination = loop {
                let d = pick(&mut rng, &destinations);
                if d != origin {
                    break d;
                }
            };
            out.push(Request {
                id: RequestId(id),
                origin,
                destination,
                arrival_epoch: epoch as u32,
            });
            id += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_network::{cluster_intersections, generate_grid_city, GridSpec};

    fn setup() -> (RoadNetwork, ClusterAssignment) {
        let net = generate_grid_city(&GridSpec {
            rows: 5,
            cols: 5,
            ..GridSpec::default()
        })
        .unwrap();
        let c = cluster_intersections(&net, 4, 0).unwrap();
        (net, c)
    }

    #[test]
    fn zero_rate_gives_nothing() {
        let (net, c) = setup();
        let reqs = synthesize_demand(&net, &c, &DemandModel::constant(0.0, 30), 1, 0).unwrap();
        assert!(reqs.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let (net, c) = setup();
        let m = DemandModel::constant(7.0, 20);
        assert_eq!(
            synthesize_demand(&net, &c, &m, 5, 0).unwrap(),
            synthesize_demand(&net, &c, &m, 5, 0).unwrap()
        );
    }

    #[test]
    fn constant_rate_mean_within_ten_percent() {
        let (net, c) = setup();
        let m = DemandModel::constant(100.0, 50);
        let mut total = 0usize;
        for seed in 0..5 {
            total += synthesize_demand(&net, &c, &m, seed, 0).unwrap().len();
        }
        let mean = total as f64 / (5.0 * 50.0);
        assert!((mean - 100.0).abs() < 10.0, "mean {mean}");
    }

    #[test]
    fn weights_concentrate_origins() {
        let (net, c) = setup();
        let m = DemandModel {
            rate_profile: vec![20.0; 10],
            origin_weights: Some(vec![1.0, 0.0, 0.0, 0.0]),
            destination_weights: None,
        };
        let reqs = synthesize_demand(&net, &c, &m, 3, 0).unwrap();
        assert!(!reqs.is_empty());
        assert!(reqs.iter().all(|r| c.cluster_of(r.origin) == ClusterId(0)));
        assert!(reqs.iter().all(|r| r.origin != r.destination));
    }

    #[test]
    fn wrong_weight_length_rejected() {
        let (net, c) = setup();
        let m = DemandModel {
            rate_profile: vec![1.0],
            origin_weights: Some(vec![1.0]),
            destination_weights: None,
        };
        assert!(synthesize_demand(&net, &c, &m, 3, 0).is_err());
    }
}
