//! Run manifests: written before any work starts, carrying everything a
//! replay needs (the resolved config snapshot and seeds) plus bookkeeping.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Deterministic id derived from (command, resolved config); identical
    /// invocations share an id, so replays line up.
    pub run_id: String,
    pub command: String,
    pub version: String,
    pub created_unix_secs: u64,
    pub master_seed: u64,
    /// Resolved config snapshot, relative to the run directory.
    pub config_snapshot: String,
    /// Output files, relative to the run directory.
    pub outputs: Vec<String>,
}

/// FNV-64 over the canonical snapshot; hex-encoded.
pub fn run_id(command: &str, snapshot_toml: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in command.bytes().chain(snapshot_toml.bytes()) {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}

impl RunManifest {
    pub fn create(
        command: &str,
        snapshot_toml: &str,
        master_seed: u64,
        outputs: Vec<String>,
    ) -> Self {
        Self {
            run_id: run_id(command, snapshot_toml),
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            master_seed,
            config_snapshot: "config.toml".into(),
            outputs,
        }
    }

    pub fn write(&self, run_dir: &Path) -> CliResult<PathBuf> {
        let path = run_dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, body).map_err(|e| CliError::io("writing manifest", e))?;
        Ok(path)
    }
}

/// Create the run directory and drop the config snapshot + manifest into it
/// before the command does any real work.
pub fn prepare_run_dir(
    run_dir: &Path,
    command: &str,
    snapshot_toml: &str,
    master_seed: u64,
    outputs: Vec<String>,
) -> CliResult<RunManifest> {
    std::fs::create_dir_all(run_dir)
        .map_err(|e| CliError::io(&format!("creating {}", run_dir.display()), e))?;
    std::fs::write(run_dir.join("config.toml"), snapshot_toml)
        .map_err(|e| CliError::io("writing config snapshot", e))?;
    let manifest = RunManifest::create(command, snapshot_toml, master_seed, outputs);
    manifest.write(run_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_is_deterministic_and_command_sensitive() {
        let a = run_id("train", "[ppo]\nalpha = 10.0\n");
        let b = run_id("train", "[ppo]\nalpha = 10.0\n");
        let c = run_id("eval", "[ppo]\nalpha = 10.0\n");
        let d = run_id("train", "[ppo]\nalpha = 100.0\n");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.len(), 16);
    }
}
