//! Relative change of a few scenarios against a baseline.

use std::path::Path;

use saev::metrics::compare_reports;
use saev::scenario::{place, prepare, simulate, ScenarioConfig};

fn main() -> saev::Result<()> {
    let cfg = ScenarioConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/small.toml"))?;
    let prepared = prepare(&cfg)?;
    let cells = place(&cfg, &prepared)?.solution.selected;

    let mut reports = Vec::new();
    for (name, battery, seats) in [("base", 41.0, 4), ("50kwh", 50.0, 4), ("2seats", 41.0, 2)] {
        let mut c = cfg.clone();
        c.fleet.battery_kwh = battery;
        c.fleet.seats = seats;
        reports.push((name.to_string(), simulate(&c, &prepared, &c.roster_for(&cells))?.report));
    }
    print!("{}", compare_reports(&reports, "base")?.to_text());
    Ok(())
}
