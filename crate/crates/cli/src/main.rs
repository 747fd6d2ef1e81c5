//! `pdm`: command-line front end for personalized instance matching.

mod cli;
mod commands;
mod config;
mod error;
mod files;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::Cli;
use crate::config::{RunConfig, CONFIG_ENV};
use crate::error::CliError;

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let env_config = std::env::var_os(CONFIG_ENV).map(Into::into);
    let config = RunConfig::resolve(
        cli.flags.config.as_deref(),
        env_config,
        cli.flags.overrides(),
    )?;
    eprintln!(
        "{{\"command\":\"{}\",\"run_config\":{}}}",
        cli.command.name(),
        config.to_json()
    );
    commands::run(&cli.command, &config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
