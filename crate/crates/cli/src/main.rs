//! `araucana`: synthesize data, train reference black boxes, explain single
//! predictions and measure explainer fidelity.
//!
//! Exit codes: 0 success, 1 runtime / I/O / oracle failure, 2 usage error.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

pub(crate) enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub(crate) fn runtime(msg: impl Into<String>) -> Self {
        Failure::Runtime(msg.into())
    }
}

impl From<araucana::Error> for Failure {
    fn from(e: araucana::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub(crate) type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    // clap exits with 2 on malformed command lines.
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Synth(a) => commands::synth(&cli, a),
        Command::Train(a) => commands::train(&cli, a),
        Command::Explain(a) => commands::explain(&cli, a),
        Command::Evaluate(a) => commands::evaluate(&cli, a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `araucana --help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
