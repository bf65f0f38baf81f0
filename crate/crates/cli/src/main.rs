//! `ffsc`: command-line front end. Exit status 0 on success, 1 for usage or
//! input errors, 2 for internal failures.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(ffsc_core::Error),
}

impl From<ffsc_core::Error> for CliError {
    fn from(e: ffsc_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn report(e: &CliError) -> u8 {
    match e {
        CliError::Usage(m) => {
            eprintln!("error: {m}");
            1
        }
        CliError::Core(e) => {
            // Messages already embed their causes.
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match std::panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => ExitCode::from(report(&e)),
        Err(_) => ExitCode::from(2),
    }
}
