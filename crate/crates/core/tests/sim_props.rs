use std::collections::HashMap;

use proptest::prelude::*;
use sigfree_core::sim::{check_departure_headways, run, EventKind, SimConfig, SimEvent};
use sigfree_core::{
    CrossingTimeDist, DemandProfile, HeadwayMatrix, HybridState, IntersectionSpec, OdClass, PolicyKind,
    PolicyState, TieRule, VehicleId, VehicleRecord,
};

fn theta() -> HeadwayMatrix {
    HeadwayMatrix::new([[0.5, 1.0], [1.0, 0.5]]).unwrap()
}

fn spec(lambda: [f64; 2]) -> IntersectionSpec {
    IntersectionSpec::new(
        theta(),
        CrossingTimeDist::two_point(0.5, 0.1).unwrap(),
        DemandProfile::new(lambda).unwrap(),
    )
    .unwrap()
}

fn policies() -> [PolicyKind; 4] {
    [
        PolicyKind::FIFO,
        PolicyKind::MS,
        PolicyKind::lqf(1.0),
        PolicyKind::Lqf {
            beta: 1.2,
            tie_rule: TieRule::PreferClassOne,
        },
    ]
}

fn class_of(b: bool) -> OdClass {
    if b {
        OdClass::One
    } else {
        OdClass::Two
    }
}

/// `(class, gap before arrival, crossing time)`.
fn arrival_stream() -> impl Strategy<Value = Vec<(bool, f64, f64)>> {
    prop::collection::vec((any::<bool>(), 0.0..3.0f64, 0.2..0.9f64), 1..60)
}

/// Drives the process directly from an arrival list; returns departures.
fn drive(policy: &PolicyKind, arrivals: &[(OdClass, f64, f64)], initial: OdClass) -> Vec<(VehicleId, f64)> {
    let th = theta();
    let mut state = HybridState::new(initial);
    let mut pol = PolicyState::new(policy, initial);
    let mut counters = [0u64; 2];
    let mut out = Vec::new();
    for &(k, gap, r) in arrivals {
        for d in state.advance(gap).unwrap() {
            out.push((d.record.id, d.time));
        }
        pol.after_departures(&state);
        counters[k.index()] += 1;
        let rec = VehicleRecord::new(VehicleId::new(k, counters[k.index()]), state.clock(), r);
        pol.on_arrival(&mut state, rec, &th);
        assert!(state.aggregate().x.iter().all(|x| *x >= -1e-12));
    }
    let rest = state.workload() + 1.0;
    for d in state.advance(rest).unwrap() {
        out.push((d.record.id, d.time));
    }
    out
}

fn departures(events: &[SimEvent]) -> Vec<&SimEvent> {
    events.iter().filter(|e| e.kind == EventKind::Departure).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn running_totals_match_residual_sums(stream in arrival_stream(), policy_ix in 0usize..4) {
        let th = theta();
        let policy = policies()[policy_ix];
        let mut state = HybridState::new(OdClass::One);
        let mut pol = PolicyState::new(&policy, OdClass::One);
        for (i, &(b, gap, r)) in stream.iter().enumerate() {
            state.advance(gap).unwrap();
            pol.after_departures(&state);
            let k = class_of(b);
            let rec = VehicleRecord::new(VehicleId::new(k, i as u64), state.clock(), r);
            pol.on_arrival(&mut state, rec, &th);
            let fast = state.aggregate().x;
            let exact = state.aggregate_exact().x;
            for c in 0..2 {
                prop_assert!((fast[c] - exact[c]).abs() < 1e-9);
                prop_assert!(fast[c] >= 0.0);
            }
        }
    }

    #[test]
    fn workload_drains_at_unit_rate(stream in arrival_stream(), dt in 0.0..10.0f64) {
        let th = theta();
        let mut state = HybridState::new(OdClass::One);
        let mut pol = PolicyState::new(&PolicyKind::MS, OdClass::One);
        for (i, &(b, _, r)) in stream.iter().enumerate() {
            let k = class_of(b);
            pol.on_arrival(&mut state, VehicleRecord::new(VehicleId::new(k, i as u64), 0.0, r), &th);
        }
        let before = state.workload();
        state.advance(dt).unwrap();
        prop_assert!((state.workload() - (before - dt).max(0.0)).abs() < 1e-9);
    }

    #[test]
    fn departures_keep_headways_and_class_order(stream in arrival_stream(), policy_ix in 0usize..4) {
        let arrivals: Vec<_> = stream.iter().map(|&(b, g, r)| (class_of(b), g, r)).collect();
        let deps = drive(&policies()[policy_ix], &arrivals, OdClass::One);
        prop_assert_eq!(deps.len(), arrivals.len());
        let th = theta();
        let r_of: HashMap<VehicleId, f64> = {
            let mut counters = [0u64; 2];
            arrivals.iter().map(|&(k, _, r)| {
                counters[k.index()] += 1;
                (VehicleId::new(k, counters[k.index()]), r)
            }).collect()
        };
        for w in deps.windows(2) {
            let need = th.get(w[0].0.class, w[1].0.class) + r_of[&w[1].0];
            prop_assert!(w[1].1 - w[0].1 >= need - 1e-9);
        }
        for k in OdClass::ALL {
            let idx: Vec<u64> = deps.iter().filter(|d| d.0.class == k).map(|d| d.0.index).collect();
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn fifo_departs_in_arrival_order(stream in arrival_stream()) {
        let arrivals: Vec<_> = stream.iter().map(|&(b, g, r)| (class_of(b), g, r)).collect();
        let deps = drive(&PolicyKind::FIFO, &arrivals, OdClass::One);
        let mut counters = [0u64; 2];
        let expected: Vec<VehicleId> = arrivals.iter().map(|&(k, _, _)| {
            counters[k.index()] += 1;
            VehicleId::new(k, counters[k.index()])
        }).collect();
        let got: Vec<VehicleId> = deps.iter().map(|d| d.0).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn ms_switches_only_when_serving_class_is_cleared(stream in arrival_stream()) {
        let arrivals: Vec<_> = stream.iter().map(|&(b, g, r)| (class_of(b), g, r)).collect();
        let deps = drive(&PolicyKind::MS, &arrivals, OdClass::One);
        let mut arrival_time = HashMap::new();
        let (mut t, mut counters) = (0.0, [0u64; 2]);
        for &(k, g, _) in &arrivals {
            t += g;
            counters[k.index()] += 1;
            arrival_time.insert(VehicleId::new(k, counters[k.index()]), t);
        }
        for (i, w) in deps.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if a.0.class != b.0.class {
                // No vehicle of the discharged class is waiting when the switch happens.
                let waiting = deps[i + 1..].iter().any(|d| d.0.class == a.0.class && arrival_time[&d.0] < a.1);
                prop_assert!(!waiting, "switch after {} at {} with its class still queued", a.0, a.1);
            }
        }
    }

    #[test]
    fn lqf_is_symmetric_under_class_exchange(stream in arrival_stream()) {
        let arrivals: Vec<_> = stream.iter().map(|&(b, g, r)| (class_of(b), g, r)).collect();
        let mirrored: Vec<_> = arrivals.iter().map(|&(k, g, r)| (k.other(), g, r)).collect();
        let a = drive(&PolicyKind::lqf(1.0), &arrivals, OdClass::One);
        let b = drive(&PolicyKind::lqf(1.0), &mirrored, OdClass::Two);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.0.class.other(), y.0.class);
            prop_assert_eq!(x.0.index, y.0.index);
            prop_assert!((x.1 - y.1).abs() < 1e-9);
        }
    }

    #[test]
    fn simulation_is_reproducible(seed in any::<u64>(), policy_ix in 0usize..4, l in 0.05..0.3f64) {
        let mut c = SimConfig::new(spec([l, 0.8 * l]), policies()[policy_ix], 500.0, seed);
        c.record_events = true;
        prop_assert_eq!(run(&c).unwrap(), run(&c).unwrap());
    }

    #[test]
    fn event_logs_respect_headways(seed in any::<u64>(), policy_ix in 0usize..4, l1 in 0.0..0.35f64, l2 in 0.0..0.35f64) {
        prop_assume!(l1 + l2 > 0.01);
        let mut c = SimConfig::new(spec([l1, l2]), policies()[policy_ix], 2000.0, seed);
        c.record_events = true;
        let res = run(&c).unwrap();
        let events = res.events.unwrap();
        prop_assert!(check_departure_headways(&events, &theta(), 1e-9).is_none());
        prop_assert!(res.throughput <= 1.2 * (l1 + l2) + 0.05);
        prop_assert!(res.time_avg_workload >= 0.0 && res.mean_system_time >= 0.0);
        for k in OdClass::ALL {
            let idx: Vec<u64> = departures(&events).iter().filter(|e| e.vehicle.class == k).map(|e| e.vehicle.index).collect();
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn single_class_logs_agree_across_policies(seed in any::<u64>(), l in 0.05..0.9f64) {
        let logs: Vec<_> = policies().iter().map(|p| {
            let mut c = SimConfig::new(spec([l, 0.0]), *p, 1000.0, seed);
            c.record_events = true;
            run(&c).unwrap().events.unwrap()
        }).collect();
        for l in &logs[1..] {
            prop_assert_eq!(l, &logs[0]);
        }
    }

    #[test]
    fn fifo_delay_is_monotone_in_demand(seed in any::<u64>(), p in 0.1..0.9f64, base in 0.1..0.5f64, c in 1.05..1.5f64) {
        let at = |total: f64| {
            let cfg = SimConfig::new(spec([p * total, (1.0 - p) * total]), PolicyKind::FIFO, 5000.0, seed);
            run(&cfg).unwrap().per_vehicle_delay_mean
        };
        let lo = at(base);
        let hi = at((base * c).min(0.75));
        prop_assert!(hi >= lo - 1e-9, "delay fell from {} to {}", lo, hi);
    }
}

#[test]
fn mean_delay_grows_with_demand_for_every_policy() {
    for policy in policies() {
        let mut last = 0.0;
        for total in [0.1, 0.2, 0.3] {
            let mut c = SimConfig::new(spec([0.5 * total, 0.5 * total]), policy, 2e4, 7);
            c.replication_count = 1;
            let d = run(&c).unwrap().per_vehicle_delay_mean;
            assert!(d >= last, "{}: delay {d} at ‖λ‖={total} below {last}", policy.name());
            last = d;
        }
    }
}

#[test]
fn littles_law_holds_on_stable_runs() {
    for policy in policies() {
        let c = SimConfig::new(spec([0.2, 0.15]), policy, 2e5, 11);
        let r = run(&c).unwrap();
        let predicted = r.throughput * r.mean_system_time;
        let rel = (r.mean_number_in_system - predicted).abs() / predicted;
        assert!(rel < 0.03, "{}: L = {} vs λW = {predicted}", policy.name(), r.mean_number_in_system);
    }
}
