//! Run manifests: every command records what ran, with what inputs, so a
//! run can be reproduced from the manifest alone.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub struct RunManifest {
    command: String,
    args: Vec<(String, String)>,
    seed: Option<u64>,
    inputs: Vec<(String, String)>,
    started: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            args: Vec::new(),
            seed: None,
            inputs: Vec::new(),
            started: now(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.args.push((key.to_string(), value.to_string()));
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    /// Record an input file or directory with its content hash.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let hash = hash_path(path)?;
        self.inputs.push((path.display().to_string(), hash));
        Ok(self)
    }

    /// Write `run_manifest.json` into `out_dir`.
    pub fn finish(&self, out_dir: &Path) -> Result<(), CliError> {
        let manifest = json!({
            "command": self.command,
            "args": Value::Object(
                self.args
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect(),
            ),
            "seed": self.seed,
            "inputs": Value::Object(
                self.inputs
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect(),
            ),
            "started_unix": self.started,
            "finished_unix": now(),
        });
        std::fs::create_dir_all(out_dir).map_err(CliError::runtime)?;
        std::fs::write(
            out_dir.join("run_manifest.json"),
            serde_json::to_string_pretty(&manifest).map_err(CliError::runtime)?,
        )
        .map_err(CliError::runtime)
    }
}

/// SHA-256 of a file, or of the sorted `(relative path, file hash)` list
/// for a directory.
pub fn hash_path(path: &Path) -> Result<String, CliError> {
    if path.is_file() {
        let bytes = std::fs::read(path).map_err(CliError::runtime)?;
        return Ok(format!("{:x}", Sha256::digest(&bytes)));
    }
    if path.is_dir() {
        let mut entries = Vec::new();
        collect_files(path, path, &mut entries)?;
        entries.sort();
        let mut hasher = Sha256::new();
        for (rel, hash) in entries {
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
            hasher.update(hash.as_bytes());
            hasher.update(b"\n");
        }
        return Ok(format!("{:x}", hasher.finalize()));
    }
    Err(CliError::Validation(format!(
        "input path '{}' does not exist",
        path.display()
    )))
}

fn collect_files(
    root: &Path,
    dir: &Path,
    out: &mut Vec<(String, String)>,
) -> Result<(), CliError> {
    for entry in std::fs::read_dir(dir).map_err(CliError::runtime)? {
        let path = entry.map_err(CliError::runtime)?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let bytes = std::fs::read(&path).map_err(CliError::runtime)?;
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .display()
                .to_string();
            out.push((rel, format!("{:x}", Sha256::digest(&bytes))));
        }
    }
    Ok(())
}
