//! Batch front end: solve / verify / compare / simulate / sweep over a
//! TOML configuration.
//!
//! Exit codes: 0 all checks passed, 1 an audit found a witness (or a
//! dominance/benchmark check failed), 2 configuration or runtime error.

// !(x > 0.0)-style comparisons are NaN-rejecting guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Workspace;

#[derive(Parser)]
#[command(name = "collusion-lab", version, about = "Second-price-auction collusion laboratory")]
struct Cli {
    /// Path to the TOML configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Random seed (overrides game.seed)
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for audits and simulation (overrides game.threads)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Override a config key, e.g. --set game.reserve=0.3 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the bribing schedule and export it as CSV and JSON
    Solve,
    /// Run the incentive-compatibility, refinement and family-dominance audits
    Verify,
    /// Solve the bribe-only benchmark and compare payoffs
    Compare,
    /// Seeded Monte Carlo playouts of the game
    Simulate {
        /// Number of draws (overrides sim.n)
        #[arg(long, value_name = "N")]
        n: Option<u64>,
    },
    /// One simulation summary per value of the swept parameter
    Sweep,
}

fn run(cli: Cli) -> anyhow::Result<report::RunReport> {
    let config_path = cli
        .config
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let loaded = config::load_config(&config_path, &cli.set)?;
    let ws = Workspace::prepare(loaded, cli.out.as_deref(), cli.seed, cli.threads)?;
    match cli.command {
        Command::Solve => commands::cmd_solve(&ws),
        Command::Verify => commands::cmd_verify(&ws),
        Command::Compare => commands::cmd_compare(&ws),
        Command::Simulate { n } => commands::cmd_simulate(&ws, n),
        Command::Sweep => commands::cmd_sweep(&ws),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more checks failed; see report.json");
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
