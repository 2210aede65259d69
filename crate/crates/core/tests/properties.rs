use proptest::prelude::*;

use ridepool::demand::{Request, RequestId};
use ridepool::fleet::{best_insertion, check_route, schedule, DelayConstraints, Stop, StopKind, Vehicle};
use ridepool::road_network::{generate_grid_city, GridSpec, Location, RoadNetwork};

fn city(seed: u64) -> RoadNetwork {
    generate_grid_city(&GridSpec {
        rows: 4,
        cols: 4,
        edge_time: 30.0,
        jitter: 0.4,
        seed,
    })
    .unwrap()
}

/// Every merge of `new` pickup/dropoff pairs into `existing` that keeps the
/// existing order and each pickup before its dropoff.
fn interleavings(existing: &[Stop], pairs: &[(Stop, Stop)]) -> Vec<Vec<Stop>> {
    fn go(existing: &[Stop], pairs: &[(Stop, Stop)], status: &mut Vec<u8>, cur: &mut Vec<Stop>, out: &mut Vec<Vec<Stop>>) {
        if existing.is_empty() && status.iter().all(|&s| s == 2) {
            out.push(cur.clone());
            return;
        }
        if let Some((first, rest)) = existing.split_first() {
            cur.push(*first);
            go(rest, pairs, status, cur, out);
            cur.pop();
        }
        for i in 0..pairs.len() {
            let stop = match status[i] {
                0 => pairs[i].0,
                1 => pairs[i].1,
                _ => continue,
            };
            status[i] += 1;
            cur.push(stop);
            go(existing, pairs, status, cur, out);
            cur.pop();
            status[i] -= 1;
        }
    }
    let mut out = Vec::new();
    go(existing, pairs, &mut vec![0; pairs.len()], &mut Vec::new(), &mut out);
    out
}

fn loc(net: &RoadNetwork, i: u32) -> Location {
    Location(i % net.len() as u32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn insertion_equals_interleaving_oracle(
        seed in 0u64..20,
        start in 0u32..16,
        onboard in prop::collection::vec((0u32..16, 60.0f64..600.0), 0..=2),
        new in prop::collection::vec((0u32..16, 1u32..16), 1..=2),
        tau in prop::sample::select(vec![60.0, 120.0, 240.0]),
    ) {
        let net = city(seed);
        let constraints = DelayConstraints::new(tau, 60.0).unwrap();
        let mut v = Vehicle::new(0, 4, loc(&net, start));
        for (i, &(dest, slack)) in onboard.iter().enumerate() {
            let id = RequestId(100 + i as u64);
            v.onboard.push(id);
            let dest = loc(&net, dest);
            v.route.push(Stop { location: dest, kind: StopKind::Dropoff, request: id, deadline: net.time(v.position, dest) + slack });
        }
        let trip: Vec<Request> = new
            .iter()
            .enumerate()
            .map(|(i, &(o, shift))| {
                let o = loc(&net, o);
                Request::new(i as u64, o, loc(&net, o.0 + shift), 0).unwrap()
            })
            .collect();
        let pairs: Vec<(Stop, Stop)> = trip.iter().map(|r| constraints.stops_for(r, &net)).collect();
        let oracle = interleavings(&v.route, &pairs)
            .into_iter()
            .filter(|r| check_route(&v, r, &net, 0.0).is_ok())
            .map(|r| schedule(&v, &r, &net, 0.0).last().copied().unwrap_or(0.0))
            .fold(None, |best: Option<f64>, d| Some(best.map_or(d, |b| b.min(d))));
        let got = best_insertion(&v, &trip, &net, 0.0, &constraints);
        match (got, oracle) {
            (None, None) => {}
            (Some(ins), Some(best)) => {
                prop_assert!((ins.duration - best).abs() < 1e-9, "search {} vs oracle {}", ins.duration, best);
                prop_assert!(check_route(&v, &ins.route, &net, 0.0).is_ok());
            }
            (g, o) => prop_assert!(false, "search {:?} vs oracle {:?}", g.map(|i| i.duration), o),
        }
    }

    #[test]
    fn advance_composes(
        seed in 0u64..20,
        start in 0u32..16,
        reqs in prop::collection::vec((0u32..16, 1u32..16), 1..=3),
        a in 0.0f64..200.0,
        b in 0.0f64..200.0,
    ) {
        let net = city(seed);
        let constraints = DelayConstraints::new(600.0, 60.0).unwrap();
        let mut v = Vehicle::new(0, 4, loc(&net, start));
        let trip: Vec<Request> = reqs
            .iter()
            .enumerate()
            .map(|(i, &(o, shift))| {
                let o = loc(&net, o);
                Request::new(i as u64, o, loc(&net, o.0 + shift), 0).unwrap()
            })
            .collect();
        if let Some(ins) = best_insertion(&v, &trip, &net, 0.0, &constraints) {
            v.route = ins.route;
        }
        let mut split = v.clone();
        let first = split.advance(&net, 0.0, a);
        let second = split.advance(&net, a, b);
        let mut whole = v.clone();
        let all = whole.advance(&net, 0.0, a + b);
        prop_assert_eq!(&split.position, &whole.position);
        prop_assert_eq!(&split.route, &whole.route);
        prop_assert_eq!(&split.onboard, &whole.onboard);
        prop_assert!((split.eta_offset - whole.eta_offset).abs() < 1e-6);
        let ids = |o: &[(RequestId, f64)]| o.iter().map(|x| x.0).collect::<Vec<_>>();
        let mut picked = ids(&first.picked);
        picked.extend(ids(&second.picked));
        prop_assert_eq!(picked, ids(&all.picked));
        let mut dropped = ids(&first.dropped);
        dropped.extend(ids(&second.dropped));
        prop_assert_eq!(dropped, ids(&all.dropped));
    }

    #[test]
    fn shortest_paths_obey_triangle_inequality(seed in 0u64..50, u in 0u32..16, v in 0u32..16, w in 0u32..16) {
        let net = city(seed);
        let (u, v, w) = (Location(u), Location(v), Location(w));
        prop_assert!(net.time(u, w) <= net.time(u, v) + net.time(v, w) + 1e-9);
        prop_assert_eq!(net.time(u, u), 0.0);
    }
}
