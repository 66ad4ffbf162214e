mod args;
mod config;
mod enhance;
mod error;
mod metrics;
mod simulate;
mod train;
mod util;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn parse() -> CliResult<Cli> {
    let argv = config::merge(std::env::args_os().collect())?;
    match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(cli),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            Err(CliError::usage("no subcommand given; see --help"))
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            Err(CliError::usage(first.trim_start_matches("error: ").to_string()))
        }
    }
}

fn run() -> CliResult<()> {
    let cli = parse()?;
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| CliError::validation(format!("--workers: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Enhance(a) => enhance::run(a),
        Command::Metrics(a) => metrics::run(a),
        Command::TrainMask(a) => train::run(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
