mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use log::LevelFilter;

use args::{Cli, Command};

const EXIT_FAILURE: u8 = 1;
const EXIT_PARAMETER: u8 = 2;
const EXIT_INGESTION: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

/// Outcome of a command that ran to completion.
pub enum Status {
    Done,
    /// The scan found no usable variation; outputs were still written.
    Degenerate,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use frechet_cp::Error;
    let core = err.chain().find_map(|e| e.downcast_ref::<Error>());
    match core {
        Some(Error::Parameter(_)) => EXIT_PARAMETER,
        Some(Error::Parse { .. } | Error::Ingestion(_) | Error::Csv(_)) => EXIT_INGESTION,
        _ if err.chain().any(|e| e.is::<commands::InputError>()) => EXIT_INGESTION,
        _ if err.chain().any(|e| e.is::<commands::ParameterError>()) => EXIT_PARAMETER,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    let result = std::fs::create_dir_all(&cli.out)
        .map_err(anyhow::Error::from)
        .and_then(|_| match &cli.command {
            Command::Ingest(a) => commands::ingest(a, &cli.out),
            Command::Densities(a) => commands::densities(a, &cli.out),
            Command::Detect(a) => commands::detect(a, &cli.out),
            Command::Report(a) => commands::report(a, &cli.out),
            Command::Simulate(a) => commands::simulate(a, &cli.out),
        });
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Degenerate) => {
            eprintln!("no change-point evidence: the sequence has no variation");
            ExitCode::from(EXIT_DEGENERATE)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
