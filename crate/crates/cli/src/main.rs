mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command, EvalCommand};

/// Failures mapped to exit codes: configuration problems exit with 2,
/// everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<spartsm::Error> for CliError {
    fn from(e: spartsm::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli, matches: &clap::ArgMatches) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    dispatch(&cli.command, sub).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{name}: {msg}")),
        other => other,
    })
}

fn dispatch(command: &Command, sub: &clap::ArgMatches) -> Result<(), CliError> {
    match command {
        Command::Simulate(_) => commands::simulate(config::resolve(sub)?),
        Command::Fit(_) => commands::fit(config::resolve(sub)?),
        Command::Infer(_) => commands::infer(config::resolve(sub)?),
        Command::Changepoint(_) => commands::changepoint(config::resolve(sub)?),
        Command::Eval(eval) => {
            let (_, leaf) = sub.subcommand().expect("an eval subcommand is required");
            match eval {
                EvalCommand::Roc(_) => commands::roc(config::resolve(leaf)?),
                EvalCommand::Coverage(_) => commands::coverage(config::resolve(leaf)?),
                EvalCommand::Power(_) => commands::power(config::resolve(leaf)?),
                EvalCommand::Normality(_) => commands::normality(config::resolve(leaf)?),
            }
        }
    }
}
