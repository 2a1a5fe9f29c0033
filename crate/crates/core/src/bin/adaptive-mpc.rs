use std::path::PathBuf;
use std::process::ExitCode;

use adaptive_mpc::cli::{run_experiment, ExperimentConfig, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adaptive-mpc",
    version,
    about = "Adaptive-horizon MPC experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every closed loop described by a config file.
    Run {
        config: PathBuf,
        /// `key=value`, applied after the file; may be repeated.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
        /// Number of runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        overrides,
        out,
        quiet,
        jobs,
    } = Cli::parse().command;

    let mut cfg = match ExperimentConfig::from_file(&config, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }

    let report = match run_experiment(&cfg, RunOptions { jobs, quiet }) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    for run in report.failed() {
        eprintln!("{}: {}", run.label, run.summary.terminated);
    }
    if !quiet {
        println!("summary written to {}", report.summary_path.display());
    }
    ExitCode::from(report.exit_code() as u8)
}
