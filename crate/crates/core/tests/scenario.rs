use std::path::{Path, PathBuf};
use std::process::Command;

use saev::energy::write_roster;
use saev::metrics::compare_reports;
use saev::scenario::{check_roster, cli_compare, cli_run, cli_sweep, prepare, ScenarioConfig, Strategy, SweepGrid};
use saev::Error;

fn small_toml() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/small.toml")
}

fn small() -> ScenarioConfig {
    ScenarioConfig::load(&small_toml()).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn run_twice_writes_identical_bytes() {
    let cfg = small();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cli_run(&cfg, None, None, a.path()).unwrap();
    cli_run(&cfg, None, None, b.path()).unwrap();
    let fa = files(a.path());
    for name in ["requests.csv", "legs.csv", "report.csv", "trace.csv", "roster.csv"] {
        assert!(fa.iter().any(|p| p.ends_with(name)), "missing {name}");
    }
    assert!(a.path().join("placement/placement.csv").exists());
    for p in &fa {
        let q = b.path().join(p.strip_prefix(a.path()).unwrap());
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(&q).unwrap(), "{p:?}");
    }
}

#[test]
fn seed_override_changes_the_run() {
    let cfg = small();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let x = cli_run(&cfg, None, None, a.path()).unwrap();
    let y = cli_run(&cfg, Some(8), None, b.path()).unwrap();
    assert_ne!(x.log.requests, y.log.requests);
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let cfg = small();
    let grid = SweepGrid::parse("stations.outlets=2,6;stations.kind=normal,rapid").unwrap();
    let out = tempfile::tempdir().unwrap();
    let rows = cli_sweep(&cfg, None, &grid, None, out.path()).unwrap();
    assert_eq!(rows.len(), grid.len());
    let mut rdr = csv::Reader::from_path(out.path().join("sweep.csv")).unwrap();
    assert_eq!(rdr.records().count(), 4);
    let mut rdr = csv::Reader::from_path(out.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().get(0), Some("stations.outlets"));
    assert_eq!(rdr.records().count(), 4);

    let labels: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(labels[0], "outlets=2;kind=normal");
    let t = cli_compare(&[out.path().join("sweep.csv")], labels[0], Some(out.path())).unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(out.path().join("compare.csv").exists());
}

#[test]
fn comparing_a_report_with_itself_gives_zero() {
    let cfg = small();
    let out = tempfile::tempdir().unwrap();
    let r = cli_run(&cfg, None, None, out.path()).unwrap();
    let t = compare_reports(&[("a".into(), r.report.clone()), ("b".into(), r.report)], "a").unwrap();
    assert!(t.rows[0].2.iter().all(|d| *d == Some(0.0)));
}

#[test]
fn forbidden_roster_cell_is_rejected_when_constrained() {
    let mut cfg = small();
    cfg.stations.strategy = Strategy::PmedianConstrained;
    cfg.stations.forbidden_zones = vec![[0.0, 0.0, 4.0, 4.0]];
    let prepared = prepare(&cfg).unwrap();
    let cell = *prepared.forbidden.iter().next().unwrap();
    let roster = cfg.roster_for(&[cell]);
    match check_roster(&cfg, &prepared, &roster) {
        Err(Error::Config(issues)) => assert!(issues[0].message.contains("forbidden")),
        other => panic!("expected a config error, got {other:?}"),
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("roster.csv");
    write_roster(&roster, std::fs::File::create(&path).unwrap()).unwrap();
    assert!(cli_run(&cfg, None, Some(&path), &dir.path().join("out")).is_err());

    cfg.stations.strategy = Strategy::Pmedian;
    assert!(check_roster(&cfg, &prepared, &roster).is_ok());
}

#[test]
fn config_errors_name_the_field() {
    let text = std::fs::read_to_string(small_toml()).unwrap().replace("size = 40", "size = -1");
    let cfg = ScenarioConfig::from_toml(&text).unwrap();
    let msg = cfg.validate().unwrap_err().to_string();
    assert!(msg.contains("fleet.size"), "{msg}");
}

fn saev(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_saev")).args(args).output().unwrap()
}

#[test]
fn command_line_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let config = small_toml().to_string_lossy().into_owned();

    let out = saev(&["place", "--config", &config, "--seed", "7", "--out", &d("place")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("place/roster.csv").exists());

    let out = saev(&["run", "--config", &config, "--roster", &d("place/roster.csv"), "--out", &d("run")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("modal_share_pct"));

    let out = saev(&[
        "sweep", "--config", &config, "--grid", "stations.outlets=2,4", "--out", &d("sweep"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = saev(&["compare", &d("sweep/sweep.csv"), "--baseline", "outlets=2", "--out", &d("cmp")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("cmp/compare.csv").exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\n[fleet]\nsize = -3\n").unwrap();
    let out = saev(&["run", "--config", &bad.to_string_lossy(), "--out", &d("bad")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fleet.size"));
}
