use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Provenance record written next to every output. Contains no timestamps,
/// so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 over the resolved parameters and the contents of every input.
    pub config_digest: String,
    /// 0 for commands without randomness.
    pub seed: u64,
    pub input_paths: Vec<PathBuf>,
    pub output_paths: Vec<PathBuf>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, params: &impl Serialize, seed: u64, inputs: &[&Path], outputs: &[PathBuf]) -> Result<Self> {
        let params = serde_json::to_value(params).map_err(|e| CliError::Usage(e.to_string()))?;
        let input_hashes = inputs.iter().map(|p| file_digest(p)).collect::<Result<Vec<_>>>()?;
        let canonical = json!({
            "command": command,
            "params": params,
            "inputs": input_hashes,
            "tool_version": env!("CARGO_PKG_VERSION"),
        });
        Ok(Self {
            command: command.to_string(),
            config_digest: digest_value(&canonical),
            seed,
            input_paths: inputs.iter().map(|p| p.to_path_buf()).collect(),
            output_paths: outputs.to_vec(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    /// `<first output>.manifest.json`.
    pub fn default_path(primary_output: &Path) -> PathBuf {
        let mut name = primary_output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| CliError::Usage(e.to_string()))?;
        bytes.push(b'\n');
        xcheck_io::write_atomic(path, &bytes).map_err(CliError::from)
    }
}

/// Object keys are sorted, so the encoding is canonical.
fn digest_value(value: &Value) -> String {
    let bytes = serde_json::to_vec(value).expect("values always serialize");
    hex::encode(Sha256::digest(&bytes))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
