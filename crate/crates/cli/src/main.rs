mod args;
mod commands;
mod files;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;
use clap::error::ErrorKind;

/// Invalid flag values detected after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PROVIDER: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<ontorag::Error>() {
            return if e.is_provider() { EXIT_PROVIDER } else { EXIT_DATA };
        }
        if cause.is::<ontorag::ProviderError>() {
            return EXIT_PROVIDER;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            if code == EXIT_USAGE {
                eprintln!("Run with --help for usage.");
            }
            ExitCode::from(code)
        }
    }
}
