//! Same placement, 22 kW against 43 kW chargers.

use std::path::Path;

use saev::scenario::{place, prepare, simulate, ScenarioConfig, StationType};

fn main() -> saev::Result<()> {
    let mut cfg = ScenarioConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/small.toml"))?;
    // Small batteries so the few stations actually get busy.
    cfg.fleet.battery_kwh = 12.0;
    let prepared = prepare(&cfg)?;
    let cells = place(&cfg, &prepared)?.solution.selected;

    for kind in [StationType::Normal, StationType::Rapid] {
        let mut c = cfg.clone();
        c.stations.kind = kind;
        let r = simulate(&c, &prepared, &c.roster_for(&cells))?;
        println!(
            "{:<7} {:>5.0} kW  plugged {:>8.1} min  queue {:>7.1} min  PKT {:>8.1} km",
            format!("{kind:?}"),
            c.power_kw(),
            r.report.total_plugged_min,
            r.report.total_queue_min,
            r.report.in_vehicle_pkt_km
        );
    }
    Ok(())
}
