mod args;
mod commands;
mod config;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::resolve;

fn run(cli: Cli) -> config::CliResult<()> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = a.config.clone();
            commands::simulate(resolve(&a, cfg.as_deref())?)
        }
        Command::Fit(a) => {
            let cfg = a.config.clone();
            commands::fit(resolve(&a, cfg.as_deref())?)
        }
        Command::Bwselect(a) => {
            let cfg = a.config.clone();
            commands::bwselect(resolve(&a, cfg.as_deref())?)
        }
        Command::Resample(a) => {
            let cfg = a.config.clone();
            commands::resample(resolve(&a, cfg.as_deref())?)
        }
        Command::Predict(a) => {
            let cfg = a.config.clone();
            commands::predict(resolve(&a, cfg.as_deref())?)
        }
        Command::Evaluate(a) => {
            let cfg = a.config.clone();
            commands::evaluate(resolve(&a, cfg.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
