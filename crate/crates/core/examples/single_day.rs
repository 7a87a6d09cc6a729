//! One cold-start day on the small scenario, with the invariant audits.

use std::path::Path;

use saev::scenario::{cold_start_day, place, prepare, ScenarioConfig};

fn main() -> saev::Result<()> {
    let cfg = ScenarioConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/small.toml"))?;
    let prepared = prepare(&cfg)?;
    let placement = place(&cfg, &prepared)?;
    let log = cold_start_day(&cfg, &prepared, &placement.roster)?;

    let m = saev::metrics::compute(&log);
    println!("{}", m.to_text());
    let audit = log.audit_all(cfg.dispatch.detour_floor_min, cfg.dispatch.detour_fraction);
    println!("audit: {}", if audit.ok() { "clean".to_string() } else { format!("{:?}", audit.problems) });

    let dir = std::env::temp_dir().join("saev_single_day");
    log.write_bundle(&dir)?;
    println!("bundle written to {}", dir.display());
    Ok(())
}
