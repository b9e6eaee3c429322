//! TOML or JSON configuration files, chosen by extension.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use xcheck_core::ModelCostProfile;

use crate::error::{IoError, Result};

/// `.toml` parses as TOML, anything else as JSON.
pub fn load_structured<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_structured(&text, is_toml(path))
}

pub fn parse_structured<T: DeserializeOwned>(text: &str, toml: bool) -> Result<T> {
    if toml {
        toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))
    }
}

pub fn is_toml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

#[derive(Deserialize)]
struct ProfileFile {
    #[serde(alias = "profile")]
    profiles: Vec<ModelCostProfile>,
}

/// Reads `{"profiles": [...]}` or TOML `[[profile]]` tables and validates
/// each entry.
pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<ModelCostProfile>> {
    let file: ProfileFile = load_structured(path)?;
    for p in &file.profiles {
        p.validate()?;
    }
    Ok(file.profiles)
}
