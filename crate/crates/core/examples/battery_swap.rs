//! Battery swapping with batteries bought on demand, then with a fixed stock.

use std::path::Path;

use saev::scenario::{place, prepare, simulate, ScenarioConfig, StationType};

fn main() -> saev::Result<()> {
    let mut cfg = ScenarioConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/small.toml"))?;
    // Small batteries so the few stations actually get busy.
    cfg.fleet.battery_kwh = 12.0;
    cfg.stations.kind = StationType::Swap;
    let prepared = prepare(&cfg)?;
    let cells = place(&cfg, &prepared)?.solution.selected;

    for stock in [None, Some(2)] {
        let mut c = cfg.clone();
        c.stations.swap_stock = stock;
        let r = simulate(&c, &prepared, &c.roster_for(&cells))?;
        println!(
            "stock {:<9} swaps {:>4}  extra batteries {:>3} ({:.2} per vehicle)  queue {:>7.1} min",
            stock.map_or("on demand".to_string(), |s| s.to_string()),
            r.report.swaps,
            r.report.extra_batteries,
            r.report.extra_batteries as f64 / c.fleet.size as f64,
            r.report.total_queue_min
        );
    }
    Ok(())
}
