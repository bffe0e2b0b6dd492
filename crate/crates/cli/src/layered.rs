//! JSON config files layered under command-line flags.
//!
//! A config file is a JSON object whose keys are the subcommand's long flag
//! names. A flag typed on the command line wins over the file; the file wins
//! over built-in defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub fn read_config(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("config {} must hold a JSON object", path.display()),
    }
}

fn typed_on_command_line(matches: &ArgMatches, key: &str) -> Result<bool> {
    let id = key.replace('-', "_");
    if id == "config" || matches.try_get_raw(&id).is_err() {
        bail!("unknown config key {key:?}");
    }
    Ok(matches.value_source(&id) == Some(ValueSource::CommandLine))
}

/// Overlay `file` onto `args` for every key not given on the command line.
pub fn merge<T: Serialize + DeserializeOwned>(args: T, matches: &ArgMatches, file: &Map<String, Value>) -> Result<T> {
    let mut merged = match serde_json::to_value(&args)? {
        Value::Object(m) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    for (key, value) in file {
        if !typed_on_command_line(matches, key)? {
            merged.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(Value::Object(merged)).context("invalid config file")
}
