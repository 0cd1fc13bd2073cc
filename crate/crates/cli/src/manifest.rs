use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Provenance record written as `run.json` next to a command's outputs.
#[derive(Debug, Default)]
pub struct Manifest {
    command: String,
    seed: Option<u64>,
    config_hash: Option<String>,
    inputs: BTreeMap<String, Value>,
    outputs: Vec<String>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn config_hash(&mut self, hash: String) -> &mut Self {
        self.config_hash = Some(hash);
        self
    }

    /// Records the SHA-256 of an input file under `role`.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<&mut Self> {
        let digest = file_digest(path)?;
        self.inputs.insert(
            role.into(),
            json!({ "path": path.display().to_string(), "sha256": digest }),
        );
        Ok(self)
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.outputs.push(path.into().display().to_string());
        self
    }

    pub fn write(&mut self, out_dir: &Path) -> Result<PathBuf> {
        self.outputs.sort();
        self.outputs.dedup();
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let value = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timestamp_unix": timestamp,
        });
        let path = out_dir.join("run.json");
        std::fs::write(&path, serde_json::to_string_pretty(&value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
