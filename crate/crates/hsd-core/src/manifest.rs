//! Run manifests: every artifact-producing command records its settings,
//! inputs, seed and outputs so a run can be replayed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelcodec::CodecSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub started: String,
    pub finished: Option<String>,
    pub seed: Option<u64>,
    /// input role -> path or value
    pub inputs: BTreeMap<String, String>,
    /// effective settings after file/flag merging
    pub settings: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub codec: Option<CodecSpec>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: chrono::Utc::now().to_rfc3339(),
            finished: None,
            seed: None,
            inputs: BTreeMap::new(),
            settings: BTreeMap::new(),
            outputs: Vec::new(),
            codec: None,
        }
    }

    pub fn input(&mut self, role: &str, value: impl ToString) -> &mut Self {
        self.inputs.insert(role.to_string(), value.to_string());
        self
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.settings.insert(key.to_string(), value.to_string());
        self
    }

    pub fn output(&mut self, path: impl ToString) -> &mut Self {
        self.outputs.push(path.to_string());
        self
    }

    /// Stamp the finish time and write the manifest.
    pub fn write(&mut self, path: &Path) -> Result<()> {
        self.finished = Some(chrono::Utc::now().to_rfc3339());
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("serialize manifest: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::config(format!("parse manifest {}: {e}", path.display())))
    }
}
