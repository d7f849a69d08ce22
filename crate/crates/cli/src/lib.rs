//! Command-line front end for shared-kernel screening: data ingestion,
//! dictionary and result files, and the study drivers.

pub mod args;
pub mod commands;
pub mod failure;
pub mod io;

use std::fs;
use std::path::Path;

use args::{Cli, Command};
use failure::{Failure, Outcome};

fn output_dir(path: &Path) -> Outcome<&Path> {
    fs::create_dir_all(path)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))?;
    Ok(path)
}

/// Runs one parsed invocation inside a thread pool of the requested size.
pub fn run(cli: &Cli) -> Outcome<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()?;
    pool.install(|| match &cli.command {
        Command::FitDictionary(a) => commands::cmd_fit_dictionary(a, output_dir(&a.common.out)?),
        Command::Screen(a) => commands::cmd_screen(a, output_dir(&a.common.out)?),
        Command::Simulate(a) => commands::cmd_simulate(a, output_dir(&a.out)?),
        Command::RateStudy(a) => commands::cmd_rate_study(a, output_dir(&a.common.out)?),
        Command::RecoveryStudy(a) => commands::cmd_recovery_study(a, output_dir(&a.common.out)?),
        Command::ConsistencyStudy(a) => {
            commands::cmd_consistency_study(a, output_dir(&a.common.out)?)
        }
        Command::Permute(a) => commands::cmd_permute(a, output_dir(&a.screen.common.out)?),
    })
}
