//! Run manifests: the resolved configuration, seed and output listing that
//! make every run reproducible from the manifest alone (the timestamp is
//! informational).

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub timestamp_utc: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub scenario_file: Option<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, scenario: Option<&Path>) -> Self {
        Self {
            tool: "mmce".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_utc: chrono::Utc::now().to_rfc3339(),
            command: command.to_string(),
            seed: config.system.seed,
            config: config.clone(),
            scenario_file: scenario.map(|p| p.display().to_string()),
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), String> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| format!("manifest serialization: {e}"))?;
        crate::atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read manifest {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("manifest parse error: {e}"))
    }
}
