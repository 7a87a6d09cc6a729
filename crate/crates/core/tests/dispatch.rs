mod common;

use proptest::prelude::*;
use saev::dispatch::{
    ChoiceKind, DispatchParams, EnergyRule, FleetEntry, Planner, Rider, Stop, StopKind, VehicleView,
};
use saev::energy::ConsumptionModel;
use saev::network::CongestionProfile;
use saev::time::Tick;

const N: usize = 9;
const RATE: f64 = 0.164;

fn rule(reserve: f64) -> EnergyRule {
    EnergyRule {
        consumption: ConsumptionModel::new(RATE).unwrap(),
        reserve_kwh: reserve,
        unlimited: false,
    }
}

fn hops(a: usize, b: usize) -> i64 {
    (a as i64 - b as i64).abs()
}

fn rider(id: usize, o: usize, d: usize) -> Rider {
    let m = hops(o, d) as f64;
    let mut r = Rider::new(id, o, d, m, m);
    r.max_mult = 0.0;
    r
}

/// Replays a plan on the line by hand: ten ticks per hop, no time for
/// same-node stops. Returns stop times when every rule holds.
fn replay(start: Tick, onboard: u32, stops: &[Stop], riders: &[Rider], params: &DispatchParams) -> Option<Vec<Tick>> {
    let mut t = start;
    let mut at = stops[0].node;
    let mut load = onboard;
    let mut picked: Vec<Option<Tick>> = riders.iter().map(|r| r.picked_up).collect();
    let mut times = Vec::new();
    for s in stops {
        t += 10 * hops(at, s.node);
        at = s.node;
        let k = riders.iter().position(|r| r.request == s.request)?;
        let r = &riders[k];
        let direct = 10 * hops(r.origin, r.destination);
        let allow = |d_ticks: i64| (5.0f64).max(0.4 * d_ticks as f64 / 10.0);
        match s.kind {
            StopKind::Pickup => {
                if r.promised_pickup != Tick::MAX {
                    let slack = (allow(direct) * 10.0).round() as i64;
                    if t > r.promised_pickup + slack {
                        return None;
                    }
                }
                picked[k] = Some(t);
                load += 1;
                if load > params.seats {
                    return None;
                }
            }
            StopKind::Dropoff => {
                let ride = t - picked[k]?;
                if (ride - direct) as f64 / 10.0 > allow(direct) + 1e-9 {
                    return None;
                }
                load -= 1;
            }
        }
        times.push(t);
    }
    Some(times)
}

fn meters(stops: &[Stop]) -> i64 {
    stops.windows(2).map(|w| 1000 * hops(w[0].node, w[1].node)).sum()
}

fn nearest_station(node: usize, stations: &[usize]) -> i64 {
    stations.iter().map(|&s| hops(node, s)).min().unwrap()
}

/// Every ordering of old stops plus the new pair that keeps the old order,
/// keeps the first stop first and puts the pickup before the dropoff.
fn interleavings(stops: &[Stop], p: Stop, d: Stop) -> Vec<Vec<Stop>> {
    let n = stops.len() + 2;
    let mut out = Vec::new();
    for pi in 0..n {
        for di in 0..n {
            if pi >= di || pi == 0 {
                continue;
            }
            let mut seq = Vec::with_capacity(n);
            let mut old = stops.iter();
            for k in 0..n {
                if k == pi {
                    seq.push(p);
                } else if k == di {
                    seq.push(d);
                } else {
                    seq.push(*old.next().unwrap());
                }
            }
            out.push(seq);
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Case {
    start: Tick,
    onboard: Vec<(usize, Tick)>,
    pending: Vec<(usize, usize)>,
    order: Vec<usize>,
    new: (usize, usize),
    soc: f64,
    seats: u32,
}

fn case() -> impl Strategy<Value = Case> {
    (
        0i64..200,
        prop::collection::vec((0..N, 0i64..30), 0..3),
        prop::collection::vec((0..N, 0..N), 0..2),
        prop::collection::vec(any::<u32>(), 8),
        (0..N, 0..N),
        1.0f64..6.0,
        1u32..5,
    )
        .prop_map(|(start, onboard, pending, keys, new, soc, seats)| Case {
            start: 1000 + start,
            onboard,
            pending,
            order: keys.into_iter().map(|k| k as usize).collect(),
            new,
            soc,
            seats,
        })
}

/// Builds stops and riders for a case; `None` if it is degenerate.
fn build(c: &Case, params: &DispatchParams) -> Option<(u32, Vec<Stop>, Vec<Rider>, Rider)> {
    let mut riders = Vec::new();
    let mut groups: Vec<Vec<Stop>> = Vec::new();
    for (i, &(d, ago)) in c.onboard.iter().enumerate() {
        let o = (d + 3) % N;
        if o == d {
            return None;
        }
        let mut r = rider(i, o, d);
        r.picked_up = Some(c.start - ago);
        r.max_mult = 1.0;
        riders.push(r);
        groups.push(vec![Stop { kind: StopKind::Dropoff, request: i, node: d }]);
    }
    for &(o, d) in &c.pending {
        if o == d {
            return None;
        }
        let id = riders.len();
        riders.push(rider(id, o, d));
        groups.push(vec![
            Stop { kind: StopKind::Pickup, request: id, node: o },
            Stop { kind: StopKind::Dropoff, request: id, node: d },
        ]);
    }
    if groups.is_empty() || c.new.0 == c.new.1 {
        return None;
    }
    // Interleave the groups in an order driven by the random keys.
    let mut stops = Vec::new();
    let mut cursor = vec![0usize; groups.len()];
    let mut k = 0;
    while stops.len() < groups.iter().map(Vec::len).sum() {
        let g = c.order[k % c.order.len()] % groups.len();
        k += 1;
        let g = (0..groups.len()).map(|x| (g + x) % groups.len()).find(|&x| cursor[x] < groups[x].len())?;
        stops.push(groups[g][cursor[g]]);
        cursor[g] += 1;
    }
    let onboard = c.onboard.len() as u32;
    if onboard > params.seats {
        return None;
    }
    let times = replay(c.start, onboard, &stops, &riders, params)?;
    for (s, t) in stops.iter().zip(&times) {
        if s.kind == StopKind::Pickup {
            riders[s.request].promised_pickup = *t;
        }
    }
    let new = rider(riders.len(), c.new.0, c.new.1);
    Some((onboard, stops, riders, new))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn insertion_is_the_cheapest_feasible_interleaving(c in case()) {
        let (_, table) = common::line(N);
        let congestion = CongestionProfile::free_flow();
        let params = DispatchParams { seats: c.seats, ..DispatchParams::default() };
        let energy = rule(0.0);
        let stations = [0usize, N - 1];
        let planner = Planner::new(&table, &congestion, &params, &energy, &stations);
        let Some((onboard, stops, riders, new)) = build(&c, &params) else { return Ok(()) };

        let got = planner.insert_shared(c.soc, c.start, onboard, &stops, &riders, &new);

        let base_end = c.start + replay(c.start, onboard, &stops, &riders, &params).map_or(0, |t| t.last().unwrap() - c.start);
        let mut all = riders.clone();
        all.push(new);
        let p = Stop { kind: StopKind::Pickup, request: new.request, node: new.origin };
        let d = Stop { kind: StopKind::Dropoff, request: new.request, node: new.destination };
        let mut best: Option<Tick> = None;
        if stops.len() + 2 <= params.max_stops {
            for seq in interleavings(&stops, p, d) {
                let Some(times) = replay(c.start, onboard, &seq, &all, &params) else { continue };
                let km = (meters(&seq) + 1000 * nearest_station(seq.last().unwrap().node, &stations)) as f64 / 1000.0;
                if c.soc < RATE * km {
                    continue;
                }
                let cost = times.last().unwrap() - base_end;
                best = Some(best.map_or(cost, |b: Tick| b.min(cost)));
            }
        }
        prop_assert_eq!(got.map(|i| i.cost), best);

        if let Some(ins) = got {
            let mut seq = stops.clone();
            seq.insert(ins.pickup_at, p);
            seq.insert(ins.dropoff_at, d);
            let times = replay(c.start, onboard, &seq, &all, &params);
            prop_assert!(times.is_some());
            prop_assert_eq!(times.unwrap()[ins.pickup_at], ins.pickup_tick);
        }
    }

    #[test]
    fn idle_assignment_is_the_closest_vehicle_with_enough_charge(
        fleet in prop::collection::vec((0..N, 0.0f64..4.0), 1..8),
        o in 0..N,
        d in 0..N,
        reserve in 0.0f64..0.5,
    ) {
        prop_assume!(o != d);
        let (_, table) = common::line(N);
        let congestion = CongestionProfile::free_flow();
        let params = DispatchParams::default();
        let energy = rule(reserve);
        let stations = [2usize, 6];
        let planner = Planner::new(&table, &congestion, &params, &energy, &stations);
        let entries: Vec<FleetEntry> = fleet
            .iter()
            .enumerate()
            .map(|(id, &(node, soc))| FleetEntry { id, soc_kwh: soc, view: VehicleView::Idle { node } })
            .collect();
        let r = rider(0, o, d);
        let now = 5000;
        let out = planner.assign(&entries, &r, now);

        let need = |v: usize| RATE * (hops(v, o) + hops(o, d) + nearest_station(d, &stations)) as f64 + reserve;
        let expect = fleet
            .iter()
            .enumerate()
            .filter(|(_, &(v, soc))| soc >= need(v))
            .min_by_key(|(id, &(v, _))| (hops(v, o), *id))
            .map(|(id, &(v, _))| (id, now + 10 * hops(v, o)));
        prop_assert_eq!(out.choice.map(|c| (c.vehicle, c.pickup_tick)), expect);
        if let Some(c) = out.choice {
            prop_assert_eq!(c.kind, ChoiceKind::Idle);
        }
        let nearest = fleet
            .iter()
            .enumerate()
            .min_by_key(|(id, &(v, _))| (hops(v, o), *id))
            .map(|(id, &(v, soc))| (id, soc < need(v)))
            .unwrap();
        prop_assert_eq!(out.nearest_idle_short, nearest.1.then_some(nearest.0));
    }
}

#[test]
fn unlimited_range_ignores_charge() {
    let (_, table) = common::line(N);
    let congestion = CongestionProfile::free_flow();
    let params = DispatchParams::default();
    let mut energy = rule(0.0);
    energy.unlimited = true;
    let planner = Planner::new(&table, &congestion, &params, &energy, &[]);
    let entries = [FleetEntry { id: 0, soc_kwh: 0.0, view: VehicleView::Idle { node: 0 } }];
    let out = planner.assign(&entries, &rider(0, 3, 8), 0);
    assert_eq!(out.choice.map(|c| c.pickup_tick), Some(30));
}

#[test]
fn detour_pickup_on_the_way() {
    let (_, table) = common::line(N);
    let congestion = CongestionProfile::free_flow();
    let params = DispatchParams::default();
    let energy = rule(0.0);
    let stations = [0usize];
    let planner = Planner::new(&table, &congestion, &params, &energy, &stations);
    let c = Case {
        start: 1000,
        onboard: vec![(8, 0)],
        pending: vec![],
        order: vec![0],
        new: (3, 6),
        soc: 5.0,
        seats: 4,
    };
    let (onboard, stops, riders, new) = build(&c, &params).unwrap();
    let ins = planner.insert_shared(c.soc, c.start, onboard, &stops, &riders, &new).unwrap();
    // Drop at 8 first, then 5 hops back to 3 and 3 hops on to 6.
    assert_eq!((ins.pickup_at, ins.dropoff_at), (1, 2));
    assert_eq!(ins.cost, 80);
    assert_eq!(ins.pickup_tick, 1050);
}
