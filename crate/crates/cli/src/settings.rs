//! Merging of flags, config-file values and defaults.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

/// Reads a config file whose top level holds one table per command.
pub fn load_config(path: &Path) -> Result<Map<String, Value>> {
    let value: Value = xcheck_io::load_structured(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(CliError::Usage(format!("config {}: top level must be a table", path.display()))),
    }
}

/// The command's table, if any.
pub fn section<'a>(config: &'a Map<String, Value>, command: &str) -> Result<Option<&'a Map<String, Value>>> {
    match config.get(command) {
        None => Ok(None),
        Some(Value::Object(m)) => Ok(Some(m)),
        Some(_) => Err(CliError::Usage(format!("config: `{command}` must be a table"))),
    }
}

/// Replaces every value not given on the command line with the config
/// value, when there is one. Unknown config keys are usage errors.
pub fn resolve<T>(parsed: T, matches: &ArgMatches, config: Option<&Map<String, Value>>) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let Some(config) = config else {
        return Ok(parsed);
    };
    let mut value = serde_json::to_value(&parsed).map_err(|e| CliError::Usage(e.to_string()))?;
    let fields = value.as_object_mut().expect("argument structs serialize to objects");
    for (key, v) in config {
        if !fields.contains_key(key) {
            return Err(CliError::Usage(format!("config: unknown key `{key}`")));
        }
        let from_flag = matches!(matches.value_source(key), Some(ValueSource::CommandLine));
        if !from_flag {
            fields.insert(key.clone(), v.clone());
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config: {e}")))
}
