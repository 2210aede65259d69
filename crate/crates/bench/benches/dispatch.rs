use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ridepool::action_gen::generate_feasible_actions;
use ridepool::cevd::{score_all, CevdParams, Kernel, VehicleValues};
use ridepool::demand::{epoch_batches, synthesize_demand, DemandModel, DemandStats};
use ridepool::matching::solve;
use ridepool::oracle::random_assignment_instance;
use ridepool::road_network::{cluster_intersections, generate_grid_city, GridSpec};
use ridepool::simulator::{initial_checkpoint, Environment, Mode, SimConfig, Simulator};

fn desk_scale() -> (Environment, SimConfig) {
    let net = generate_grid_city(&GridSpec {
        rows: 10,
        cols: 10,
        edge_time: 45.0,
        jitter: 0.2,
        seed: 3,
    })
    .unwrap();
    let clusters = cluster_intersections(&net, 8, 0).unwrap();
    let env = Environment {
        stats: DemandStats::empty(8, 5, 0.9, 5),
        net,
        clusters,
    };
    let sim = SimConfig {
        fleet_size: 50,
        clusters: 8,
        horizon: 5,
        mode: Mode::Cevd,
        lambda: 0.3,
        alpha: -2.0,
        ..SimConfig::default()
    };
    (env, sim)
}

fn dispatch(c: &mut Criterion) {
    let (env, sim) = desk_scale();
    let ck = initial_checkpoint(&env, &sim, &[64, 64], 0).unwrap();
    let reqs = synthesize_demand(&env.net, &env.clusters, &DemandModel::constant(200.0, 1), 1, 0).unwrap();
    let batch = epoch_batches(&reqs, 1).unwrap().remove(0);
    let simulator = Simulator::new(&env, &sim, Some(&ck)).unwrap();
    let constraints = sim.constraints().unwrap();
    let cfg = sim.action_config();

    let mut g = c.benchmark_group("desk-scale");
    g.sample_size(10).measurement_time(Duration::from_secs(5));
    g.bench_function("feasible_actions_one_vehicle", |b| {
        b.iter(|| generate_feasible_actions(black_box(&simulator.fleet[0]), &batch, &env.net, &env.clusters, 0.0, &constraints, &cfg))
    });
    g.bench_function("decide_50_vehicles_200_requests", |b| b.iter(|| simulator.decide(black_box(&batch), None).unwrap()));
    g.finish();

    let decision = simulator.decide(&batch, None).unwrap();
    let table: Vec<VehicleValues> = decision
        .sets
        .iter()
        .zip(&decision.values)
        .zip(&simulator.fleet)
        .map(|((set, v), veh)| VehicleValues {
            home: env.clusters.cluster_of(veh.position),
            rewards: set.actions.iter().map(|a| a.reward as f64).collect(),
            clusters: set.actions.iter().map(|a| a.cluster).collect(),
            values: v.clone(),
        })
        .collect();
    let kernel = Kernel::new(&env.clusters, -2.0, Kernel::default_scale(&env.clusters)).unwrap();
    let params = CevdParams::new(0.3, 0.9).unwrap();
    c.bench_function("score_all_50_vehicles", |b| b.iter(|| score_all(black_box(&table), &kernel, &params).unwrap()));
}

fn matching(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    for vehicles in [4usize, 16, 64] {
        let mut rng = ChaCha8Rng::seed_from_u64(vehicles as u64);
        let inst = random_assignment_instance(&mut rng, vehicles, 2 * vehicles as u64, 12);
        g.bench_with_input(BenchmarkId::from_parameter(vehicles), &inst, |b, inst| {
            b.iter(|| solve(black_box(inst), Duration::from_secs(10)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, dispatch, matching);
criterion_main!(benches);
