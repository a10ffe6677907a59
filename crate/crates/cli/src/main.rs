mod args;
mod commands;
mod run;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Usage errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(roadcast::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Run(roadcast::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

impl From<roadcast::Error> for CliError {
    fn from(e: roadcast::Error) -> Self {
        CliError::Run(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();

    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Stats(a) => commands::stats(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Attention(a) => commands::attention(a),
        Command::KhopSweep(a) => commands::khop(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
