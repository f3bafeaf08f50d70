mod args;
mod commands;
mod config;
mod error;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliResult;

fn run(cli: &Cli) -> CliResult<serde_json::Value> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, cli.seed),
        Command::Fit(a) => commands::fit(a, cli.seed, cli.threads),
        Command::Eval(a) => commands::eval(a),
        Command::Rank(a) => commands::rank(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            // A closed pipe downstream is not an error of ours.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
