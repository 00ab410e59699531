//! Run manifests and content hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use camal_core::dataproc::DATASET_FORMAT_VERSION;
use camal_core::ensemble::ENSEMBLE_FORMAT_VERSION;
use camal_core::resnet::MODEL_FORMAT_VERSION;
use camal_core::synth::{SyntheticConfig, SYNTH_FORMAT_VERSION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const RUN_MANIFEST: &str = "run.json";
pub const RUN_FORMAT_VERSION: u32 = 1;

/// What one command ran with and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<SyntheticConfig>,
    /// Command arguments that are not part of the configuration.
    #[serde(default)]
    pub args: BTreeMap<String, String>,
    pub format_versions: BTreeMap<String, u32>,
    /// SHA-256 of every written file, keyed by path relative to its root.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        let format_versions = [
            ("run", RUN_FORMAT_VERSION),
            ("dataset", DATASET_FORMAT_VERSION),
            ("synth", SYNTH_FORMAT_VERSION),
            ("ensemble", ENSEMBLE_FORMAT_VERSION),
            ("model", MODEL_FORMAT_VERSION),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            format_version: RUN_FORMAT_VERSION,
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config: config.clone(),
            scenario: None,
            args: BTreeMap::new(),
            format_versions,
            outputs: BTreeMap::new(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) {
        self.args.insert(key.into(), value.to_string());
    }

    /// Records the hash of `file`, keyed by its path below `root` and `prefix`.
    pub fn record(&mut self, prefix: &str, root: &Path, file: &Path) -> Result<(), CliError> {
        let rel = file.strip_prefix(root).unwrap_or(file).to_string_lossy().replace('\\', "/");
        let key = if prefix.is_empty() { rel } else { format!("{prefix}/{rel}") };
        self.outputs.insert(key, sha256_file(file)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(RUN_MANIFEST);
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Regular files below `dir`, sorted by relative path.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| CliError::runtime(format!("{}: {e}", d.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| CliError::runtime(e.to_string()))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// One hash over every file of a directory: names and contents in path order.
pub fn hash_dir(dir: &Path) -> Result<String, CliError> {
    hash_files(dir, &list_files(dir)?)
}

/// Like [`hash_dir`] over an explicit file list.
pub fn hash_files(dir: &Path, files: &[PathBuf]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    for file in files {
        let rel = file.strip_prefix(dir).unwrap_or(file).to_string_lossy().replace('\\', "/");
        let bytes = std::fs::read(file).map_err(|e| CliError::runtime(format!("{}: {e}", file.display())))?;
        h.update((rel.len() as u64).to_le_bytes());
        h.update(rel.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}
