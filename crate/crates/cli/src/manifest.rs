use crate::config::RunConfig;
use ctw_core::dynamics::RegimeReport;
use ctw_core::io::atomic_write;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub wall_clock_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    #[serde(default)]
    pub results: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<toml::Value>,
    #[serde(default)]
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            wall_clock_s: 0.0,
            master_seed: None,
            method: None,
            preset_version: None,
            config_sha256: None,
            results: BTreeMap::new(),
            regime: None,
            config: None,
            preset: None,
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, file: &str, bytes: &[u8]) {
        self.outputs.push(OutputEntry { file: file.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = toml::to_string(self).map_err(std::io::Error::other)?;
        atomic_write(&dir.join(MANIFEST_FILE), text.as_bytes()).map_err(std::io::Error::other)
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        toml::from_str(&text).map_err(std::io::Error::other)
    }

    /// Files whose digest no longer matches.
    pub fn verify(&self, dir: &Path) -> std::io::Result<Vec<String>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            if sha256_hex(&std::fs::read(dir.join(&o.file))?) != o.sha256 {
                bad.push(o.file.clone());
            }
        }
        Ok(bad)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
