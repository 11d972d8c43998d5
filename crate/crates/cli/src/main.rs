use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use bankucb::config::parse_config;
use bankucb::runner::run_experiment;
use bankucb::{make_grid, write_outcome};
use clap::{Parser, Subcommand};

/// Batched nonparametric contextual bandit experiments.
#[derive(Parser)]
#[command(name = "bankucb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm in a config and write results.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print the batch grid endpoints, one per line.
    Grid {
        #[arg(long = "T")]
        horizon: u64,
        #[arg(long = "M")]
        batches: usize,
        #[arg(long, default_value_t = bankucb::config::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        d: usize,
    },
    /// Check a config and print the resolved settings.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run { config, output_dir } => {
            let mut cfg = parse_config(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let outcome = run_experiment(&cfg)?;
            let manifest = write_outcome(&outcome, &cfg.output_dir)?;
            for res in &outcome.results {
                log::info!(
                    "{}: mean final regret {:.3} over {} runs",
                    res.algorithm,
                    res.mean_final_regret(),
                    res.runs.len()
                );
            }
            log::info!("wrote {}", manifest.display());
        }
        Command::Grid {
            horizon,
            batches,
            alpha,
            d,
        } => {
            let grid = make_grid(horizon, batches, alpha, d)?;
            for t in grid.endpoints() {
                println!("{t}");
            }
        }
        Command::Validate { config } => {
            let cfg = parse_config(&config).with_context(|| format!("loading {}", config.display()))?;
            println!("{}: ok", config.display());
            println!("environment: {:?}", cfg.environment);
            if let Some(t) = cfg.horizon {
                println!("horizon: {t}");
            }
            println!("batches: {}", cfg.batches);
            println!("runs: {}", cfg.runs);
            for (key, value) in &cfg.defaulted {
                println!("default {key} = {value}");
            }
        }
    }
    Ok(())
}
