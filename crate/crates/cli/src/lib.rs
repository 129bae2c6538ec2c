//! Command-line surface for the sdncmv pipeline: dataset and model file
//! formats, the five subcommands, and batch replication of simulated runs.

pub mod args;
pub mod commands;
pub mod config;
pub mod formats;
pub mod pipeline;

use anyhow::{bail, Result};

pub use args::{Cli, Command};
pub use commands::Outcome;

/// Runs a parsed command inside a thread pool of the requested size.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build()?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Features(a) => commands::features(a),
        Command::Fit(a) => commands::fit(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Replicate(a) => commands::replicate(a),
    })
}
