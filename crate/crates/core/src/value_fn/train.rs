use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, Checkpoint, Experience, Mlp, ReplayMemory, StoredAction};
use crate::demand::{check_requests, epoch_batches, Request};
use crate::error::{Error, Result};
use crate::matching::{solve, AssignmentInstance, ScoredAction};
use crate::simulator::{Environment, Exploration, Mode, SimConfig, Simulator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Re-solve the stored assignment with target-network values.
    ReSolve,
    /// Bootstrap from the action that was actually taken.
    StoredAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub grad_clip: Option<f64>,
    /// Standard deviation of the score noise while acting.
    pub noise_sigma: f64,
    /// Train every this many epochs.
    pub update_every: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Copy the online network into the target network every this many steps.
    pub target_sync: usize,
    pub target_mode: TargetMode,
    pub seed: u64,
    /// Time budget for each re-solved assignment, in seconds.
    pub solver_budget: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 100,
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            grad_clip: Some(10.0),
            noise_sigma: 0.2,
            update_every: 1,
            batch_size: 16,
            replay_capacity: 500,
            target_sync: 20,
            target_mode: TargetMode::ReSolve,
            seed: 0,
            solver_budget: 1.0,
        }
    }
}

/// Regression targets `y_i = J_i + gamma * V_target(chosen_i)` for every
/// vehicle of one experience.
fn targets(e: &Experience, target: &Mlp, gamma: f64, mode: TargetMode, budget: Duration) -> Result<Vec<f64>> {
    if e.actions.is_empty() {
        return Ok(vec![0.0; e.previous.len()]);
    }
    let values: Vec<Vec<f64>> = e
        .actions
        .iter()
        .map(|acts| acts.iter().map(|a| target.evaluate(&a.features)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let choice = match mode {
        TargetMode::StoredAction => e.taken.clone(),
        TargetMode::ReSolve => {
            let instance = AssignmentInstance {
                vehicles: e
                    .actions
                    .iter()
                    .zip(&values)
                    .map(|(acts, vs)| {
                        acts.iter()
                            .zip(vs)
                            .map(|(a, v)| ScoredAction {
                                requests: a.requests.clone(),
                                score: a.reward + gamma * v,
                            })
                            .collect()
                    })
                    .collect(),
            };
            solve(&instance, budget)?.choice
        }
    };
    Ok(e.actions
        .iter()
        .zip(&values)
        .zip(&choice)
        .map(|((acts, vs), &c)| acts[c].reward + gamma * vs[c])
        .collect())
}

/// One gradient step on the squared error between `V(previous)` and the
/// re-solved targets, averaged over every `(experience, vehicle)` pair.
/// Returns the loss before the update.
pub fn train_step(
    online: &mut Mlp,
    target: &Mlp,
    opt: &mut Adam,
    batch: &[&Experience],
    gamma: f64,
    mode: TargetMode,
    budget: Duration,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty minibatch"));
    }
    let mut samples: Vec<(&[f64], f64)> = Vec::new();
    for e in batch {
        let ys = targets(e, target, gamma, mode, budget)?;
        samples.extend(e.previous.iter().map(Vec::as_slice).zip(ys));
    }
    let (loss, grad) = online.mse_grad(samples.into_iter())?;
    if loss.is_finite() && grad.iter().all(|g| g.is_finite()) {
        opt.step(online.params_mut(), &grad);
    }
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Loss of every gradient step.
    pub losses: Vec<f64>,
    /// Requests served per training episode (with exploration).
    pub episode_served: Vec<u32>,
}

/// Training state carried across episodes.
pub struct Trainer {
    pub config: TrainConfig,
    pub target: Mlp,
    pub optimizer: Adam,
    pub memory: ReplayMemory,
    rng: ChaCha8Rng,
    pub steps: usize,
}

impl Trainer {
    pub fn new(init: &Checkpoint, config: &TrainConfig) -> Self {
        Trainer {
            target: init.net.clone(),
            optimizer: Adam::new(init.net.params().len(), config.learning_rate, config.grad_clip),
            memory: ReplayMemory::new(config.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            steps: 0,
            config: config.clone(),
        }
    }

    /// One episode of acting, storing experiences and learning. The online
    /// network lives in `checkpoint` and is updated in place.
    pub fn episode(
        &mut self,
        env: &Environment,
        sim_config: &SimConfig,
        checkpoint: &mut Checkpoint,
        requests: &[Request],
        episode: usize,
        losses: &mut Vec<f64>,
    ) -> Result<u32> {
        check_requests(&env.net, requests)?;
        let batches = epoch_batches(requests, sim_config.horizon)?;
        let mut sim = Simulator::new(env, sim_config, Some(checkpoint))?;
        let budget = Duration::from_secs_f64(self.config.solver_budget);
        let mut previous: Option<Vec<Vec<f64>>> = None;
        let mut served = 0;
        for batch in &batches {
            let explore = Exploration {
                sigma: self.config.noise_sigma,
                rng: &mut self.rng,
            };
            let decision = sim.decide(batch, Some(explore))?;
            let choice = decision.assignment.choice.clone();
            let chosen: Vec<Vec<f64>> = decision.features.iter().zip(&choice).map(|(f, &c)| f[c].clone()).collect();
            served += sim.apply(batch, &decision);
            if let Some(prev) = previous.replace(chosen) {
                let actions = decision
                    .features
                    .into_iter()
                    .zip(&decision.sets)
                    .map(|(fs, set)| {
                        fs.into_iter()
                            .zip(&set.actions)
                            .map(|(features, a)| StoredAction {
                                features,
                                reward: a.reward as f64,
                                requests: a.requests.clone(),
                            })
                            .collect()
                    })
                    .collect();
                self.memory.push(Experience {
                    epoch: batch.epoch,
                    previous: prev,
                    actions,
                    taken: choice,
                });
            }
            if self.memory.is_empty() || batch.epoch as usize % self.config.update_every.max(1) != 0 {
                continue;
            }
            let online = &mut sim.value_mut().expect("training always has a network").net;
            let last_good = online.clone();
            let sample = self.memory.sample(self.config.batch_size, &mut self.rng);
            let loss = train_step(online, &self.target, &mut self.optimizer, &sample, sim_config.gamma, self.config.target_mode, budget)?;
            if !loss.is_finite() || !online.is_finite() {
                let mut ck = checkpoint.clone();
                ck.net = last_good;
                return Err(Error::Diverged {
                    episode,
                    epoch: batch.epoch as usize,
                    checkpoint: Box::new(ck),
                });
            }
            losses.push(loss);
            self.steps += 1;
            if self.steps % self.config.target_sync.max(1) == 0 {
                self.target = online.clone();
            }
        }
        if let Some(prev) = previous {
            self.memory.push(Experience {
                epoch: batches.len() as u32,
                previous: prev,
                actions: Vec::new(),
                taken: Vec::new(),
            });
        }
        checkpoint.net = sim.value().expect("training always has a network").net.clone();
        Ok(served)
    }
}

/// Runs `config.episodes` episodes, cycling through the demand `paths`.
/// Episode `n` places the fleet with seed `sim.fleet_seed + n`.
pub fn train(env: &Environment, sim: &SimConfig, config: &TrainConfig, paths: &[Vec<Request>], init: Checkpoint) -> Result<TrainOutcome> {
    let mut sim = sim.clone();
    sim.mode = match sim.mode {
        Mode::Myopic => return Err(Error::InvalidConfig("myopic mode has no value function to train".into())),
        Mode::Cevd => Mode::NeurAdpPlus,
        m => m,
    };
    sim.lambda = 0.0;
    sim.alpha = 0.0;
    if config.episodes > 0 && paths.is_empty() {
        return Err(Error::invalid("training needs at least one demand path"));
    }
    let mut trainer = Trainer::new(&init, config);
    let mut checkpoint = init;
    let mut losses = Vec::new();
    let mut episode_served = Vec::with_capacity(config.episodes);
    let base_seed = sim.fleet_seed;
    for n in 0..config.episodes {
        sim.fleet_seed = base_seed.wrapping_add(n as u64);
        let served = trainer.episode(env, &sim, &mut checkpoint, &paths[n % paths.len()], n, &mut losses)?;
        log::info!("episode {n}: served {served}, steps {}", trainer.steps);
        episode_served.push(served);
    }
    Ok(TrainOutcome {
        checkpoint,
        losses,
        episode_served,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{synthesize_demand, DemandModel, DemandStats, RequestId};
    use crate::road_network::{cluster_intersections, generate_grid_city, GridSpec};
    use crate::value_fn::{FeatureLayout, OutputActivation};

    fn exp_fixture() -> Experience {
        let f = |x: f64| vec![x, 1.0 - x, 0.5];
        let act = |x: f64, r: f64, reqs: &[u64]| StoredAction {
            features: f(x),
            reward: r,
            requests: reqs.iter().map(|&q| RequestId(q)).collect(),
        };
        Experience {
            epoch: 1,
            previous: vec![f(0.1), f(0.9)],
            actions: vec![
                vec![act(0.0, 0.0, &[]), act(0.3, 1.0, &[7]), act(0.6, 2.0, &[7, 8])],
                vec![act(1.0, 0.0, &[]), act(0.2, 1.0, &[7])],
            ],
            taken: vec![1, 0],
        }
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let net = Mlp::new(&[3, 8, 1], OutputActivation::Softplus, 1).unwrap();
        let e = exp_fixture();
        let ys = targets(&e, &net, 0.0, TargetMode::ReSolve, Duration::from_secs(1)).unwrap();
        // Best joint action: vehicle 0 takes {7, 8}, vehicle 1 nothing.
        assert_eq!(ys, vec![2.0, 0.0]);
        let ys = targets(&e, &net, 0.0, TargetMode::StoredAction, Duration::from_secs(1)).unwrap();
        assert_eq!(ys, vec![1.0, 0.0]);
    }

    #[test]
    fn repeated_steps_fit_one_experience() {
        let mut online = Mlp::new(&[3, 16, 16, 1], OutputActivation::Softplus, 2).unwrap();
        let target = online.clone();
        let mut opt = Adam::new(online.params().len(), 1e-2, Some(10.0));
        let e = exp_fixture();
        let budget = Duration::from_secs(1);
        let first = train_step(&mut online, &target, &mut opt, &[&e], 0.9, TargetMode::ReSolve, budget).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = train_step(&mut online, &target, &mut opt, &[&e], 0.9, TargetMode::ReSolve, budget).unwrap();
        }
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut online = Mlp::new(&[3, 8, 1], OutputActivation::Softplus, 2).unwrap();
        let target = online.clone();
        let mut opt = Adam::new(online.params().len(), 0.0, None);
        let e = exp_fixture();
        train_step(&mut online, &target, &mut opt, &[&e], 0.9, TargetMode::ReSolve, Duration::from_secs(1)).unwrap();
        assert_eq!(online, target);
    }

    fn toy() -> (Environment, SimConfig, Vec<Vec<Request>>) {
        let net = generate_grid_city(&GridSpec {
            rows: 3,
            cols: 3,
            edge_time: 40.0,
            jitter: 0.1,
            seed: 0,
        })
        .unwrap();
        let clusters = cluster_intersections(&net, 3, 0).unwrap();
        let model = DemandModel::constant(3.0, 8);
        let paths: Vec<Vec<Request>> = (0..2).map(|s| synthesize_demand(&net, &clusters, &model, s, 0).unwrap()).collect();
        let series: Vec<_> = paths.iter().map(|p| crate::demand::demand_series(p, 8, &clusters).unwrap()).collect();
        let env = Environment {
            stats: DemandStats::from_paths(&series, 0.9, 4).unwrap(),
            net,
            clusters,
        };
        let sim = SimConfig {
            fleet_size: 3,
            clusters: 3,
            horizon: 8,
            ..SimConfig::default()
        };
        (env, sim, paths)
    }

    fn init(env: &Environment, sim: &SimConfig) -> Checkpoint {
        let layout = FeatureLayout::new(sim.clusters, sim.capacity, sim.max_pickup_delay, sim.cycle(), true, &env.stats);
        Checkpoint::new(layout, &[8, 8], OutputActivation::Softplus, 9).unwrap()
    }

    #[test]
    fn no_episodes_returns_initial() {
        let (env, sim, paths) = toy();
        let ck = init(&env, &sim);
        let cfg = TrainConfig {
            episodes: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train(&env, &sim, &cfg, &paths, ck.clone()).unwrap().checkpoint, ck);
    }

    #[test]
    fn deterministic_without_noise() {
        let (env, sim, paths) = toy();
        let cfg = TrainConfig {
            episodes: 3,
            noise_sigma: 0.0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train(&env, &sim, &cfg, &paths, init(&env, &sim)).unwrap();
        let b = train(&env, &sim, &cfg, &paths, init(&env, &sim)).unwrap();
        assert!(!a.losses.is_empty());
        assert_eq!(a, b);
        assert_ne!(a.checkpoint, init(&env, &sim));
    }

    #[test]
    fn divergence_is_reported() {
        let (env, sim, paths) = toy();
        let mut ck = init(&env, &sim);
        let b = ck.net.output_bias_index();
        ck.net.params_mut()[b] = f64::INFINITY;
        let cfg = TrainConfig {
            episodes: 1,
            ..TrainConfig::default()
        };
        let err = train(&env, &sim, &cfg, &paths, ck);
        assert!(matches!(err, Err(Error::Diverged { .. }) | Err(Error::InvalidInput(_))), "{err:?}");
    }
}
