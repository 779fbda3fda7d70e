//! Every run that produces artifacts drops a `run-manifest.json` beside its
//! primary output: the fully resolved configuration, the seed, input paths,
//! and a SHA-256 per output file.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use demandcast_core::data::write_atomic;

use crate::CliError;

#[derive(Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: impl Serialize) -> Result<Self, CliError> {
        Ok(RunManifest {
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config)
                .map_err(|e| CliError::data(format!("config serialization: {e}")))?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn record_output(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.outputs.push(OutputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Writes `run-manifest.json` into the directory holding
    /// `primary_output` (or into it, if it is itself a directory).
    pub fn write_beside(&self, primary_output: &Path) -> Result<PathBuf, CliError> {
        let dir = if primary_output.is_dir() {
            primary_output.to_path_buf()
        } else {
            primary_output
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."))
        };
        let path = dir.join("run-manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::data(format!("manifest serialization: {e}")))?;
        write_atomic(&path, text.as_bytes()).map_err(|e| CliError::data(e.to_string()))?;
        Ok(path)
    }
}
