//! Config files mirror the command-line flags: a JSON object whose keys are
//! the long flag names. Values given on the command line win over the file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Flag ids whose value came from the command line rather than a default.
pub fn explicit_flags(matches: &ArgMatches) -> Vec<String> {
    matches
        .ids()
        .filter(|id| matches.value_source(id.as_str()) == Some(ValueSource::CommandLine))
        .map(|id| id.as_str().replace('_', "-"))
        .collect()
}

pub fn read_json_object(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("config {} must be a JSON object", path.display()),
    }
}

/// Merges `file` under `args`: a key from the file replaces the parsed value
/// unless that flag was given explicitly. Unknown keys are rejected by
/// deserializing into `T`.
pub fn overlay<T: Serialize + DeserializeOwned>(args: &T, file: Map<String, Value>, explicit: &[String]) -> Result<T> {
    let mut merged = match serde_json::to_value(args)? {
        Value::Object(map) => map,
        _ => unreachable!("flag structs serialize to objects"),
    };
    for (key, value) in file {
        if key == "config" {
            bail!("a config file cannot name another config file");
        }
        if !explicit.contains(&key) {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged)).context("invalid config")
}
