mod args;
mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure with its exit status: 1 usage, 2 data, 3 numerical.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Core(dirdp_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Core(e) if e.is_data() => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<dirdp_core::Error> for CliError {
    fn from(e: dirdp_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn run() -> Result<(), CliError> {
    let argv = args::expand_config(std::env::args().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            e.print().map_err(|e| CliError::Usage(e.to_string()))?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    match cli.command {
        Command::Train(c) => commands::train(c),
        Command::Attack(c) => commands::attack(c),
        Command::Accountant(c) => commands::accountant(c),
        Command::Score(c) => commands::score(c),
        Command::Calibrate(c) => commands::calibrate(c),
        Command::Synth(c) => commands::synth(c),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().trim_start_matches("error: "));
            ExitCode::from(e.exit_code())
        }
    }
}
