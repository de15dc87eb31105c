use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BenchError;

/// Content id of an artifact, computed like a git blob id but with SHA-256.
pub fn artifact_id(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input path → artifact id.
    pub inputs: BTreeMap<String, String>,
    /// Output path → artifact id.
    pub artifacts: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize, seeds: &[u64]) -> Result<Self, BenchError> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seeds: seeds.to_vec(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
        })
    }

    fn record(map: &mut BTreeMap<String, String>, path: &Path) -> Result<(), BenchError> {
        let bytes = std::fs::read(path).map_err(BenchError::io(path))?;
        map.insert(path.display().to_string(), artifact_id(&bytes));
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<(), BenchError> {
        Self::record(&mut self.inputs, path)
    }

    pub fn output(&mut self, path: &Path) -> Result<(), BenchError> {
        Self::record(&mut self.artifacts, path)
    }

    /// Stamps the finish time and writes `<primary output>.manifest.json`.
    pub fn finish(mut self, primary: &Path) -> Result<PathBuf, BenchError> {
        self.finished_at = chrono::Utc::now().to_rfc3339();
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        std::fs::write(&path, serde_json::to_string_pretty(&self)?).map_err(BenchError::io(&path))?;
        Ok(path)
    }
}
