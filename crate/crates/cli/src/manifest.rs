use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run. Everything except `wall_clock_ms` is a pure
/// function of the inputs and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every parameter that can change the outputs.
    pub parameters: BTreeMap<String, String>,
    /// Settings that cannot change the outputs (thread count).
    pub runtime: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    /// SHA-256 over the command, the parameters and the tool version.
    pub config_hash: String,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub wall_clock_ms: u64,
}

impl RunManifest {
    pub fn new(command: &str, parameters: BTreeMap<String, String>) -> Self {
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let config_hash = config_hash(command, &parameters, &tool_version);
        Self {
            command: command.to_string(),
            parameters,
            runtime: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version,
            config_hash,
            metrics: BTreeMap::new(),
            wall_clock_ms: 0,
        }
    }

    pub fn metric(&mut self, name: &str, value: impl Into<serde_json::Value>) {
        self.metrics.insert(name.to_string(), value.into());
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(CliError::MissingManifest(dir.to_path_buf()));
        }
        let text = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_slice(&text)?)
    }
}

pub fn config_hash(command: &str, parameters: &BTreeMap<String, String>, version: &str) -> String {
    let canonical = serde_json::to_vec(&(command, parameters, version)).expect("maps of strings serialize");
    hex::encode(Sha256::digest(canonical))
}
