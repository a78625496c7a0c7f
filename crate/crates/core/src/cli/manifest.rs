use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{file_sha256, read_json, write_json};

use super::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    ItemFailures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: Config,
    pub config_hash: String,
    pub seed: u64,
    /// Path → sha256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// Path → sha256 of every file written.
    pub outputs: BTreeMap<String, String>,
    pub started_at: f64,
    pub finished_at: Option<f64>,
    pub status: RunStatus,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

pub fn manifest_path(out_dir: &Path, command: &str) -> PathBuf {
    out_dir.join("manifests").join(format!("{command}.json"))
}

pub struct Run {
    pub path: PathBuf,
    pub manifest: RunManifest,
}

impl Run {
    /// Records the inputs and writes the manifest before any work starts.
    pub fn start(out_dir: &Path, command: &str, config: &Config, inputs: &[&Path]) -> Result<Self> {
        let mut ins = BTreeMap::new();
        for p in inputs {
            ins.insert(p.display().to_string(), file_sha256(p)?);
        }
        let run = Self {
            path: manifest_path(out_dir, command),
            manifest: RunManifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config: config.clone(),
                config_hash: config.hash(),
                seed: config.seed,
                inputs: ins,
                outputs: BTreeMap::new(),
                started_at: now(),
                finished_at: None,
                status: RunStatus::Running,
            },
        };
        write_json(&run.path, &run.manifest)?;
        Ok(run)
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest
            .outputs
            .insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    pub fn finish(mut self, status: RunStatus) -> Result<RunManifest> {
        self.manifest.finished_at = Some(now());
        self.manifest.status = status;
        write_json(&self.path, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Checks that `file` still has the hash the upstream `command` recorded
/// for it. Files no manifest knows about are accepted as external inputs.
pub fn check_upstream(out_dir: &Path, command: &str, file: &Path) -> Result<()> {
    let mp = manifest_path(out_dir, command);
    if !mp.exists() {
        return Ok(());
    }
    let m: RunManifest = read_json(&mp)?;
    if let Some(expected) = m.outputs.get(&file.display().to_string()) {
        let found = file_sha256(file)?;
        if &found != expected {
            return Err(Error::HashMismatch {
                expected: expected.clone(),
                found,
            });
        }
    }
    Ok(())
}
