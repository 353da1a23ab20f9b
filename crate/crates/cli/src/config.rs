use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{usage, CliError};

/// The one-line summary printed by every run, which doubles as a config
/// file: loading it reproduces the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "empty_inputs")]
    pub inputs: Value,
    /// Ignored on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Value>,
}

fn default_out() -> PathBuf {
    PathBuf::from(".")
}

fn empty_inputs() -> Value {
    Value::Object(Map::new())
}

impl RunRecord {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// True when `id` was given on the command line rather than defaulted.
pub fn explicit(matches: &ArgMatches, id: &str) -> bool {
    matches!(
        matches.try_get_raw(id).ok().flatten().map(|_| matches.value_source(id)),
        Some(Some(ValueSource::CommandLine | ValueSource::EnvVariable))
    )
}

/// Overlay config `inputs` onto the parsed arguments wherever the flag was
/// not given explicitly. Keys not known to the subcommand are rejected.
pub fn merge<A: Serialize + DeserializeOwned>(
    parsed: A,
    matches: &ArgMatches,
    inputs: Option<&Value>,
) -> Result<A, CliError> {
    let Some(inputs) = inputs else {
        return Ok(parsed);
    };
    let Value::Object(cfg) = inputs else {
        return Err(usage("config `inputs` must be a JSON object"));
    };
    let Value::Object(mut merged) = serde_json::to_value(&parsed).expect("arguments serialize") else {
        unreachable!("argument structs serialize to objects")
    };
    for (key, value) in cfg {
        if !merged.contains_key(key) {
            return Err(usage(format!("unknown key `{key}` in config inputs")));
        }
        if !explicit(matches, key) {
            merged.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config inputs: {e}")))
}
