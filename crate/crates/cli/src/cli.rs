//! Command-line interface: argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::{run_compare, run_simulate, run_solve, Alternative, Overrides, RunConfig, RunError, Scenario};

/// Liability-tracking portfolio control: solve, simulate, compare.
#[derive(Debug, Parser)]
#[command(name = "alm-lqg", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the backward system and write riccati.csv and summary.txt.
    Solve(Common),
    /// Solve, simulate the optimal strategy and write the reports.
    Simulate(Common),
    /// Compare the optimal strategy with a constant-mix alternative.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Fractions of wealth in each risky asset, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required_unless_present = "replay_optimal")]
        weights: Option<Vec<f64>>,
        /// Replay the optimal strategy as the alternative.
        #[arg(long, conflicts_with = "weights")]
        replay_optimal: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the simulation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn prepare(common: &Common) -> Result<(RunConfig, Scenario), RunError> {
    let (mut config, base) = RunConfig::load(&common.config)?;
    config.apply(&Overrides {
        seed: common.seed,
        paths: common.paths,
        out: common.out.clone(),
    });
    let scenario = config.validate(&base)?;
    Ok((config, scenario))
}

/// Runs a parsed command and returns the summary to print.
pub fn execute(cli: Cli) -> Result<String, RunError> {
    match cli.command {
        Command::Solve(common) => {
            let (config, scenario) = prepare(&common)?;
            Ok(run_solve(&config, &scenario)?.summary)
        }
        Command::Simulate(common) => {
            let (config, scenario) = prepare(&common)?;
            Ok(run_simulate(&config, &scenario)?.summary)
        }
        Command::Compare {
            common,
            weights,
            replay_optimal,
        } => {
            let (config, scenario) = prepare(&common)?;
            let alternative = match weights {
                Some(w) if !replay_optimal => Alternative::Weights(w),
                _ => Alternative::Optimal,
            };
            Ok(run_compare(&config, &scenario, &alternative)?.summary)
        }
    }
}
