use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use saev::scenario::{cli_compare, cli_place, cli_run, cli_sweep, ScenarioConfig, SweepGrid};

#[derive(Parser)]
#[command(name = "saev", version, about = "SAEV fleet simulation and charging-station placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve station placement from the unlimited-range base case.
    Place {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a scenario and write the day bundle and report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        roster: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one simulation per grid point, e.g. `stations.outlets=40:120:10`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        roster: Option<PathBuf>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative changes of report rows against a baseline row.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        baseline: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> saev::Result<()> {
    match cli.command {
        Command::Place { config, seed, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let p = cli_place(&cfg, seed, &out)?;
            println!(
                "placed {} stations, objective {:.3}, written to {}",
                p.solution.selected.len(),
                p.solution.objective,
                out.display()
            );
        }
        Command::Run {
            config,
            seed,
            roster,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let r = cli_run(&cfg, seed, roster.as_deref(), &out)?;
            if let Some(d) = &r.log.diagnostic {
                eprintln!("warning: {d}");
            }
            println!("{}", r.report.to_text());
        }
        Command::Sweep {
            config,
            seed,
            roster,
            grid,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let grid = match grid {
                Some(g) => SweepGrid::parse(&g)?,
                None => SweepGrid::default_outlets(),
            };
            let rows = cli_sweep(&cfg, seed, &grid, roster.as_deref(), &out)?;
            for (label, r) in rows {
                println!(
                    "{label:<28} pkt {:>10.1} km  queue {:>9.1} min  plugged {:>9.1} min",
                    r.in_vehicle_pkt_km, r.total_queue_min, r.total_plugged_min
                );
            }
        }
        Command::Compare { reports, baseline, out } => {
            let t = cli_compare(&reports, &baseline, out.as_deref())?;
            print!("{}", t.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
