//! Merging of JSON config files with command-line flags.
//!
//! Every subcommand's argument struct is also its config schema. Values are
//! resolved as: flags given on the command line, then the config file, then
//! the flag defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, FromArgMatches};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Flags shared by every subcommand for reading and writing configs.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigFlags {
    /// JSON config with any of this command's options; explicit flags win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write the effective config as JSON to FILE before running.
    #[arg(long, value_name = "FILE")]
    pub write_config: Option<PathBuf>,
}

/// Argument structs that double as config files.
pub trait RunConfig: Serialize + DeserializeOwned + FromArgMatches {
    fn config_flags(&self) -> &ConfigFlags;
    fn set_config_flags(&mut self, flags: ConfigFlags);
}

/// Parse `matches`, overlay the config file and write the effective config
/// when asked.
pub fn resolve<T: RunConfig>(matches: &ArgMatches) -> Result<T, CliError> {
    let parsed = T::from_arg_matches(matches).map_err(|e| CliError::Config(e.to_string()))?;
    let flags = parsed.config_flags().clone();
    let mut resolved = match &flags.config {
        None => parsed,
        Some(path) => overlay(parsed, matches, &read_json(path)?)?,
    };
    if let Some(out) = &flags.write_config {
        let text = serde_json::to_string_pretty(&resolved).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(out, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    }
    resolved.set_config_flags(flags);
    Ok(resolved)
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn overlay<T: RunConfig>(parsed: T, matches: &ArgMatches, file: &Value) -> Result<T, CliError> {
    let Value::Object(file) = file else {
        return Err(CliError::Config("config file must hold a JSON object".into()));
    };
    let mut base = serde_json::to_value(&parsed).map_err(|e| CliError::Runtime(e.to_string()))?;
    let fields = base.as_object_mut().expect("argument structs serialize to objects");
    for (key, value) in file {
        if !fields.contains_key(key) {
            return Err(CliError::Config(format!("unknown config key '{key}'")));
        }
        let from_flag = matches!(matches.value_source(key), Some(ValueSource::CommandLine));
        if !from_flag {
            fields.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Config(format!("invalid config: {e}")))
}

/// Comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| CliError::Config(format!("cannot parse '{s}' in {what}"))))
        .collect()
}

/// `a,b` time domain.
pub fn parse_domain(text: &str) -> Result<(f64, f64), CliError> {
    match parse_list::<f64>(text, "--domain")?.as_slice() {
        [a, b] if a.is_finite() && b.is_finite() && b > a => Ok((*a, *b)),
        _ => Err(CliError::Config(format!("--domain expects 'start,end' with start < end, got '{text}'"))),
    }
}
