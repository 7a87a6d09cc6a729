//! Queue time as outlets per station grow.

use std::path::Path;

use saev::scenario::{sweep, ScenarioConfig, SweepGrid};

fn main() -> saev::Result<()> {
    let mut cfg = ScenarioConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/small.toml"))?;
    // Small batteries so the few stations actually get busy.
    cfg.fleet.battery_kwh = 12.0;
    let grid = SweepGrid::parse("stations.outlets=1:6:1")?;
    for (label, c, r) in sweep(&cfg, &grid, None)? {
        println!(
            "{label:<12} {:>5.2} veh/outlet  queue {:>8.1} min  plugged {:>8.1} min",
            c.vehicles_per_outlet(),
            r.report.total_queue_min,
            r.report.total_plugged_min
        );
    }
    Ok(())
}
