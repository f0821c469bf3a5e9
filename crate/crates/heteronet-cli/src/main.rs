//! `heteronet`: realize directed graphs as robust heteroclinic networks and
//! analyze the induced switching dynamics.
//!
//! Pipeline: `analyze` (structural gate) -> `realize` (system manifest) ->
//! `simulate` (ODE/SDE trajectories) / `markov` (switching estimates and
//! classification) -> `report`. Every file-producing command writes a
//! `<out>.run.json` manifest; `verify` re-runs one and byte-compares.
//!
//! Exit codes: 0 success (and gate passed for `analyze`), 1 error,
//! 2 ineligible graph (`analyze`), 3 unresolved Monte-Carlo mass above 1%
//! (`markov`).

mod commands;
mod run_manifest;

use std::process::ExitCode;

use clap::Parser;

use commands::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    let threads = std::env::var("HETERONET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let _ = heteronet::init_threads(threads);

    let result = match cli.command {
        Command::Analyze(args) => commands::analyze::run(args),
        Command::Realize(args) => commands::realize::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Markov(args) => commands::markov::run(args),
        Command::Report(args) => commands::report::run(args),
        Command::Verify(args) => commands::verify::run(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
