//! Run manifests: the reproducibility record written next to every command
//! output.
//!
//! The manifest pins the full argument vector (defaults included), the
//! master seed, the tool version, and the SHA-256 of every file the run
//! produced. `manifest_hash` digests only the inputs side (command, argv,
//! parameters, seed, version), so JSON outputs can embed it without
//! circularity; `heteronet verify <run.json>` re-executes the recorded argv
//! into a scratch directory and byte-compares the outputs via their hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Full argument vector after the binary name, defaults expanded.
    pub argv: Vec<String>,
    pub parameters: BTreeMap<String, String>,
    pub master_seed: Option<u64>,
    pub manifest_hash: String,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    /// The hash digests the semantic inputs only (command, parameters,
    /// seed, tool version), never output paths, so a re-run redirected to a
    /// scratch directory reproduces byte-identical outputs, embedded hash
    /// included.
    pub fn new(
        command: &str,
        argv: Vec<String>,
        parameters: BTreeMap<String, String>,
        master_seed: Option<u64>,
    ) -> Self {
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let digest_input = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "tool_version": tool_version,
            "command": command,
            "parameters": parameters,
            "master_seed": master_seed,
        });
        let manifest_hash = hex_digest(digest_input.to_string().as_bytes());
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version,
            command: command.to_string(),
            argv,
            parameters,
            master_seed,
            manifest_hash,
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        self.outputs.push(OutputRecord {
            path: path.display().to_string(),
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }

    /// Write the manifest as `<stem>.run.json` next to the primary output.
    pub fn write_next_to(&self, primary_output: &Path) -> Result<PathBuf> {
        let path = primary_output.with_extension("run.json");
        let json = serde_json::to_string_pretty(self)?;
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write-then-rename so no partial files survive an interrupted run.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Serialize a value to pretty JSON with `manifest_hash` appended at the top
/// level, and write it atomically.
pub fn write_json_with_hash<T: Serialize>(path: &Path, value: &T, hash: &str) -> Result<()> {
    let mut value = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert(
            "manifest_hash".to_string(),
            serde_json::Value::String(hash.to_string()),
        );
    }
    let json = serde_json::to_string_pretty(&value)?;
    write_atomic(path, json.as_bytes())?;
    Ok(())
}
