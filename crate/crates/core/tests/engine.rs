use proptest::prelude::*;
use saev::engine::LegPurpose;
use saev::scenario::{prepare, simulate, ScenarioConfig, StationType};

fn small(seed: u64, agents: i64, fleet: i64) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.seed = seed;
    c.iteration_days = 2;
    c.region.width_km = 5.0;
    c.region.height_km = 5.0;
    c.network.nodes = 60;
    c.population.agents = agents;
    c.fleet.size = fleet;
    c.stations.count = 2;
    c
}

#[derive(Debug, Clone)]
struct Setup {
    seed: u64,
    agents: i64,
    fleet: i64,
    battery: f64,
    kind: StationType,
    stock: Option<i64>,
    outlets: i64,
    unlimited: bool,
    rideshare: bool,
    cells: Vec<usize>,
}

fn setup() -> impl Strategy<Value = Setup> {
    (
        any::<u64>(),
        100i64..1200,
        3i64..25,
        6.0f64..41.0,
        prop_oneof![
            Just(StationType::Normal),
            Just(StationType::Rapid),
            Just(StationType::Swap)
        ],
        prop::option::of(1i64..4),
        1i64..4,
        prop::bool::weighted(0.15),
        any::<bool>(),
        prop::collection::vec(any::<usize>(), 1..4),
    )
        .prop_map(
            |(seed, agents, fleet, battery, kind, stock, outlets, unlimited, rideshare, cells)| Setup {
                seed,
                agents,
                fleet,
                battery,
                kind,
                stock,
                outlets,
                unlimited,
                rideshare,
                cells,
            },
        )
}

fn config(s: &Setup) -> ScenarioConfig {
    let mut c = small(s.seed, s.agents, s.fleet);
    c.fleet.battery_kwh = s.battery;
    c.fleet.unlimited_range = s.unlimited;
    c.dispatch.rideshare = s.rideshare;
    c.stations.kind = s.kind;
    c.stations.outlets = s.outlets;
    c.stations.swap_bays = s.outlets;
    c.stations.swap_stock = if s.kind == StationType::Swap { s.stock } else { None };
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_scenarios_keep_every_invariant(s in setup()) {
        let cfg = config(&s);
        let prepared = prepare(&cfg).unwrap();
        let mut cells: Vec<usize> = s.cells.iter().map(|c| c % prepared.grid.len()).collect();
        cells.sort();
        cells.dedup();
        let roster = cfg.roster_for(&cells);
        let r = simulate(&cfg, &prepared, &roster).unwrap();
        let log = &r.log;

        prop_assert!(log.diagnostic.is_none(), "{:?}", log.diagnostic);
        let audit = log.audit_all(cfg.dispatch.detour_floor_min, cfg.dispatch.detour_fraction);
        prop_assert!(audit.ok(), "{:?}", audit.problems);
        prop_assert_eq!(log.vehicles.len(), s.fleet as usize);
        prop_assert_eq!(log.requests.len(), log.saev_trips());
        prop_assert!(log.requests.iter().all(|q| q.served()));
        if s.unlimited {
            prop_assert!(log.visits.is_empty());
            prop_assert!(log.legs.iter().all(|l| l.purpose != LegPurpose::Charge));
        }
        if s.kind != StationType::Swap {
            prop_assert!(log.vehicles.iter().all(|v| v.swaps == 0 && v.swap_delta_kwh == 0.0));
        }
        if let (StationType::Swap, Some(k)) = (s.kind, s.stock) {
            // A fixed stock never grows: the pool per station stays at k.
            prop_assert!(log.extra_batteries() <= k as u64 * log.stations.len() as u64);
        }

        let m = &r.report;
        prop_assert!((m.total_km - m.empty_km - m.loaded_km).abs() < 1e-6);
        if m.pax_defined {
            prop_assert!((m.pax_pct.iter().sum::<f64>() - 100.0).abs() < 1e-6);
        }
        prop_assert!(m.in_vehicle_pkt_km + 1e-9 >= m.direct_pkt_km);
        prop_assert!(m.served <= m.saev_trips && m.saev_trips <= m.trips_total);
        prop_assert!((0.0..=100.0).contains(&m.fleet_usage_pct));
        prop_assert!((m.total_plugged_min - m.hourly_plugged_min.iter().sum::<f64>()).abs() < 1e-6);
        prop_assert!(m.max_driven_km + 1e-9 >= m.avg_driven_km);
        prop_assert_eq!(m.swaps, log.visits.iter().filter(|v| v.kind == saev::energy::StationKind::Swap).count() as u64);
    }
}

#[test]
fn same_seed_same_bundle() {
    let cfg = small(11, 900, 10);
    let prepared = prepare(&cfg).unwrap();
    let roster = cfg.roster_for(&[3, 17]);
    let a = simulate(&cfg, &prepared, &roster).unwrap();
    let b = simulate(&cfg, &prepare(&cfg).unwrap(), &roster).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.report, b.report);

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.log.write_bundle(da.path()).unwrap();
    b.log.write_bundle(db.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(da.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        let x = std::fs::read(da.path().join(&n)).unwrap();
        let y = std::fs::read(db.path().join(&n)).unwrap();
        assert_eq!(x, y, "{n:?} differs");
    }
}

#[test]
fn different_seeds_differ() {
    let a = small(1, 600, 8);
    let b = small(2, 600, 8);
    let ra = simulate(&a, &prepare(&a).unwrap(), &a.roster_for(&[5])).unwrap();
    let rb = simulate(&b, &prepare(&b).unwrap(), &b.roster_for(&[5])).unwrap();
    assert_ne!(ra.log.requests, rb.log.requests);
}

#[test]
fn more_vehicles_do_not_raise_waits() {
    let mut waits = Vec::new();
    for fleet in [4, 30] {
        let mut c = small(5, 1500, fleet);
        c.iteration_days = 1;
        c.fleet.unlimited_range = true;
        let p = prepare(&c).unwrap();
        let r = simulate(&c, &p, &[]).unwrap();
        waits.push(r.report.avg_wait_min);
    }
    assert!(waits[1] <= waits[0], "{waits:?}");
}

#[test]
fn small_batteries_visit_every_kind_of_station() {
    for kind in [StationType::Normal, StationType::Rapid, StationType::Swap] {
        let mut c = small(3, 1200, 6);
        c.fleet.battery_kwh = 6.0;
        c.stations.kind = kind;
        let p = prepare(&c).unwrap();
        let r = simulate(&c, &p, &c.roster_for(&[10, 30])).unwrap();
        assert!(!r.log.visits.is_empty(), "{kind:?}");
        assert!(r.log.audit_all(5.0, 0.4).ok());
        if kind == StationType::Swap {
            assert!(r.report.swaps > 0 && r.report.extra_batteries > 0);
        } else {
            assert!(r.report.total_plugged_min > 0.0);
        }
    }
}
