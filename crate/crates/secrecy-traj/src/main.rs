//! Thin CLI over the experiment harness.
//!
//! Exit codes: 0 on full success, 1 if any run failed or output could not be
//! written, 2 on configuration errors.

use clap::{Parser, Subcommand};
use secrecy_traj::harness::{self, ExperimentMode};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "secrecy-traj", version, about = "UAV secrecy-rate maximization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a key-value config file.
    Run {
        /// Path to the config file (empty file = default benchmark scenario).
        config: PathBuf,
        /// Override the mode: single, trajectory-figure, rate-vs-T, rate-vs-power.
        #[arg(long)]
        mode: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweep grid points (0 = one per core).
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated subset of TO-w-PC,TO-wo-PC,line-w-PC.
        #[arg(long)]
        schemes: Option<String>,
    },
}

fn run(
    config: PathBuf,
    mode: Option<String>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    schemes: Option<String>,
) -> i32 {
    let mut spec = match harness::parse_config(&config) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    if let Some(mode) = mode {
        match mode.parse::<ExperimentMode>() {
            Ok(m) => spec.set_mode(m),
            Err(e) => {
                eprintln!("config error: {e}");
                return 2;
            }
        }
    }
    if let Some(out) = out {
        spec.out_dir = out;
    }
    if let Some(workers) = workers {
        spec.workers = workers;
    }
    if let Some(schemes) = schemes {
        let parsed: Result<Vec<_>, String> = schemes.split(',').map(|s| s.parse()).collect();
        match parsed {
            Ok(list) if !list.is_empty() => {
                spec.schemes = list;
                spec.schemes_defaulted = false;
            }
            Ok(_) => {
                eprintln!("config error: empty scheme list");
                return 2;
            }
            Err(e) => {
                eprintln!("config error: {e}");
                return 2;
            }
        }
    }

    let outcome = match harness::run_experiment(&spec) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };

    for row in &outcome.rows {
        match &row.status {
            harness::RunRowStatus::Ok => println!(
                "{:>9}  T = {:>5} s  Pavg = {:>6.1} dBm  rate = {:.6} bps/Hz  ({} iterations, {:.2} s)",
                row.scheme.tag(),
                row.flight_time,
                row.avg_power_dbm,
                row.rate_clipped,
                row.iterations,
                row.seconds
            ),
            harness::RunRowStatus::Failed(msg) => eprintln!(
                "{:>9}  T = {:>5} s  Pavg = {:>6.1} dBm  FAILED: {msg}",
                row.scheme.tag(),
                row.flight_time,
                row.avg_power_dbm
            ),
        }
    }

    match harness::write_outputs(&outcome, &spec) {
        Ok(paths) => {
            println!("wrote {} files to {}", paths.len(), spec.out_dir.display());
        }
        Err(e) => {
            eprintln!("output error: {e}");
            return 1;
        }
    }

    if outcome.all_succeeded() {
        0
    } else {
        1
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, mode, out, workers, schemes } => {
            run(config, mode, out, workers, schemes)
        }
    };
    std::process::exit(code);
}
