//! Command-line driver for the semiclassical propagation toolkit.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 check failure.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "semiclassical",
    about = "Wave-packet propagation along complex classical trajectories",
    version
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,

    /// Worker threads for the parallel sections (0 = hardware default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output directory, overriding [output].dir.
    #[arg(long, global = true)]
    out: Option<String>,

    /// Seed for the jittered multi-start search.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the semiclassical wave function over the target grid.
    Propagate,
    /// Propagate and compare against the split-step grid oracle.
    Compare,
    /// Run the verification checks (exit code 3 if any fail).
    Checks {
        /// determinant | ainv | moments | foc1 | stirling | fsubst | all
        selector: String,
    },
    /// Coherent-state overlap from two-sided boundary trajectories.
    Propagator,
    /// Dump branch-search diagnostics for every target.
    Branches,
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    let cfg = config::load(&cli.config)?;
    let needs_final = matches!(cli.command, Command::Propagator);
    let resolved = config::resolve(&cfg, cli.out.as_deref(), cli.seed, needs_final)?;
    match &cli.command {
        Command::Propagate => commands::cmd_propagate(&resolved, &cfg),
        Command::Compare => commands::cmd_compare(&resolved, &cfg),
        Command::Checks { selector } => commands::cmd_checks(&resolved, &cfg, selector),
        Command::Propagator => commands::cmd_propagator(&resolved, &cfg),
        Command::Branches => commands::cmd_branches(&resolved, &cfg),
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(|e| anyhow::anyhow!("building thread pool: {e}"))?;
        pool.install(|| dispatch(cli))
    }
    #[cfg(not(feature = "parallel"))]
    {
        if cli.threads > 1 {
            eprintln!("note: built without the `parallel` feature; --threads ignored");
        }
        dispatch(cli)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            // numerical failures exit 2, configuration problems exit 1
            if err.downcast_ref::<semiclassical::Error>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
