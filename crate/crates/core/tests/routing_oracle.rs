//! Cheapest insertion against exhaustive enumeration, plus full-day route audits.

use std::collections::HashMap;

use fairdispatch_core::routing::{cheapest_insertion, FleetState, PlannedRoute, Vehicle};
use fairdispatch_core::{Action, Episode, Geography, GeographyKind, Myopic, Point, Policy, Request, RewardSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

/// Schedules `seq` from `start` and returns (feasible, duration, slack), where
/// slack is how much later the load could start without breaking anything.
fn simulate(seq: &[(Point, f64)], start: f64, geo: &Geography) -> (bool, f64, f64) {
    if seq.is_empty() {
        return (true, 0.0, f64::INFINITY);
    }
    let mut t = start + geo.load_time_minutes;
    let mut at = geo.depot;
    let mut slack = f64::INFINITY;
    for (i, (loc, deadline)) in seq.iter().enumerate() {
        if i > 0 {
            t += geo.dropoff_time_minutes;
        }
        t += geo.travel_time(&at, loc);
        slack = slack.min(deadline - t);
        at = *loc;
    }
    let ret = t + geo.dropoff_time_minutes + geo.travel_time(&at, &geo.depot);
    slack = slack.min(geo.day_length_minutes - ret);
    (slack >= -TOL, ret - start, slack)
}

struct OracleInsertion {
    position: usize,
    delta: f64,
    latest_start: f64,
}

/// Tries every position; returns the cheapest feasible one (earliest on ties).
fn oracle(route: &PlannedRoute, req: &Request, now: f64, geo: &Geography) -> Option<OracleInsertion> {
    let base: Vec<(Point, f64)> = route.stops.iter().map(|s| (s.location, s.deadline)).collect();
    let start = route.depot_return.max(now);
    let old = simulate(&base, start, geo).1;
    let mut options = Vec::new();
    for p in 0..=base.len() {
        let mut seq = base.clone();
        seq.insert(p, (req.location, req.deadline));
        let (ok, duration, slack) = simulate(&seq, start, geo);
        if ok {
            options.push(OracleInsertion { position: p, delta: duration - old, latest_start: start + slack.max(0.0) });
        }
    }
    let min = options.iter().map(|o| o.delta).fold(f64::INFINITY, f64::min);
    options.into_iter().find(|o| o.delta <= min + TOL)
}

/// Random fleet with 0..=6 pending customers in total, built by repeated insertion at `now`.
fn micro_fleet(rng: &mut ChaCha8Rng, geo: &Geography) -> (FleetState, f64, Request) {
    let now = rng.random_range(0.0..geo.request_cutoff_minutes);
    let m = rng.random_range(1..=2);
    let mut fleet = FleetState {
        vehicles: (0..m)
            .map(|_| {
                let ret = if rng.random_bool(0.5) { 0.0 } else { now + rng.random_range(0.0..90.0) };
                Vehicle { ongoing_return: ret, planned: PlannedRoute::empty(ret) }
            })
            .collect(),
    };
    let pending = rng.random_range(0..=6);
    let mut index = 1;
    let random_request = |rng: &mut ChaCha8Rng, index: usize| {
        let time = (now - rng.random_range(0.0..120.0)).max(0.0);
        let location = Point::new(rng.random_range(-1.0..10.0), rng.random_range(-1.0..7.0));
        Request { index, time, location, region: 0, deadline: time + geo.deadline_minutes }
    };
    for _ in 0..50 {
        if fleet.pending().count() >= pending {
            break;
        }
        let r = random_request(rng, index);
        let v = rng.random_range(0..m);
        if let Some(ins) = cheapest_insertion(&fleet.vehicles[v].planned, &r, now, geo) {
            fleet.vehicles[v].planned = ins.candidate;
            index += 1;
        }
    }
    let mut req = random_request(rng, index);
    req.time = now;
    req.deadline = now + geo.deadline_minutes;
    (fleet, now, req)
}

fn check_case(seed: u64) {
    let geo = Geography::builtin(GeographyKind::Dist);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fleet, now, req) = micro_fleet(&mut rng, &geo);
    fleet.validate(now, &geo).unwrap();

    let mut best: Option<(usize, f64)> = None;
    for (m, v) in fleet.vehicles.iter().enumerate() {
        let got = cheapest_insertion(&v.planned, &req, now, &geo);
        let want = oracle(&v.planned, &req, now, &geo);
        match (&got, &want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                assert_eq!(g.position, w.position, "seed {seed} vehicle {m}");
                assert!((g.delta - w.delta).abs() < 1e-9, "seed {seed}: delta {} vs {}", g.delta, w.delta);
                assert!((g.candidate.load_start - w.latest_start).abs() < 1e-9, "seed {seed}: latest start");
                g.candidate.check(now, &geo).unwrap();
                if best.is_none_or(|(_, d)| w.delta < d - TOL) {
                    best = Some((m, w.delta));
                }
            }
            _ => panic!("seed {seed} vehicle {m}: feasibility disagrees ({} vs {})", got.is_some(), want.is_some()),
        }
    }
    assert_eq!(fleet.assign(&req, now, &geo).map(|(m, _)| m), best.map(|(m, _)| m), "seed {seed}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn insertion_matches_enumeration(seed in any::<u64>()) {
        check_case(seed);
    }
}

/// Accepts a random feasible action with probability one half.
struct Coin(ChaCha8Rng);

impl Policy for Coin {
    fn decide(&mut self, s: &fairdispatch_core::DispatchState, _g: &Geography) -> Action {
        let feasible = s.feasible_actions();
        if self.0.random_bool(0.5) {
            feasible[self.0.random_range(0..feasible.len())]
        } else {
            Action::Reject
        }
    }
}

fn audit_day(geo: &Geography, seed: u64, fleet: usize, policy: &mut dyn Policy) {
    let inst = geo.sample_instance(seed);
    let mut ep = Episode::reset(geo, &inst, fleet, RewardSpec::modified(0.0)).unwrap();
    while let Some(s) = ep.state() {
        let a = policy.decide(s, geo);
        ep.step(a).unwrap();
    }
    let accepted: Vec<usize> = ep.decisions().iter().filter(|d| d.action.accepts()).map(|d| d.k).collect();
    let mut served: HashMap<usize, usize> = HashMap::new();
    let mut tours: HashMap<usize, Vec<(f64, f64)>> = HashMap::new();
    for dep in ep.departures() {
        tours.entry(dep.vehicle).or_default().push((dep.load_start, dep.final_return));
        assert!(dep.final_return <= geo.day_length_minutes + TOL);
        for stop in &dep.stops {
            *served.entry(stop.customer).or_default() += 1;
            let req = &inst.requests[stop.customer - 1];
            assert!(stop.arrival <= req.deadline + TOL, "customer {} late", stop.customer);
            assert!(dep.load_start >= req.time - TOL, "customer {} loaded before ordering", stop.customer);
        }
    }
    for k in &accepted {
        assert_eq!(served.get(k), Some(&1), "seed {seed}: customer {k} served {:?} times", served.get(k));
    }
    assert_eq!(served.len(), accepted.len(), "only accepted customers are served");
    for (_, mut t) in tours {
        t.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in t.windows(2) {
            assert!(w[1].0 >= w[0].1 - TOL, "tours overlap on one vehicle");
        }
    }
    assert!(ep.fleet().pending().next().is_none(), "nothing left unloaded at the end of the day");
}

#[test]
fn full_days_serve_every_accepted_customer_once_and_on_time() {
    for seed in 0..20 {
        let geo = Geography::builtin(GeographyKind::Dist).scaled_rates(0.3);
        audit_day(&geo, seed, 3, &mut Myopic);
        audit_day(&geo, seed, 2, &mut Coin(ChaCha8Rng::seed_from_u64(seed)));
        let geo = Geography::builtin(GeographyKind::Dens).scaled_rates(0.2);
        audit_day(&geo, seed, 1, &mut Myopic);
    }
}
