use clap::{Parser, Subcommand};
use perclab_cli::{config::RunConfig, runner, runner::Command};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "perclab", about = "Noise sensitivity experiments on box percolation")]
struct Cli {
    /// TOML config file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for CSV and manifest files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Noise sweep: covariance, correlation, overlaps, geodesic sizes.
    Sweep,
    /// Exact small-system identity checks with rational arithmetic.
    Oracle,
    /// Effective radius tail and locality trials.
    Radius,
    /// Greedy self-avoiding path bounds on marked fields.
    Animal,
    /// Correlation and overlap at noise levels beta * t_hat.
    Regime,
    /// Mean distance over n across box sizes.
    TimeConstant,
    /// Distance variance over n across box sizes.
    VarianceScaling,
    /// Rate at which hop and truncated geodesics agree.
    Coincidence,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = cli.samples {
        cfg.samples = samples;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    let command = match cli.command {
        Sub::Sweep => Command::Sweep,
        Sub::Oracle => Command::Oracle,
        Sub::Radius => Command::Radius,
        Sub::Animal => Command::Animal,
        Sub::Regime => Command::Regime,
        Sub::TimeConstant => Command::TimeConstant,
        Sub::VarianceScaling => Command::VarianceScaling,
        Sub::Coincidence => Command::Coincidence,
    };
    match runner::run(command, &cfg, &cli.out) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
