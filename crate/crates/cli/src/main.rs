//! `ggev` command-line frontend: scene generation, feature extraction,
//! inference, evaluation, volume/affinity dumps, and micro-benchmarks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error. Diagnostics
//! go to stderr; results go to files or stdout as flagged.

mod bench;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
