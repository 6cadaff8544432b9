//! Run manifests: parameters, tool version and content digests of every
//! input and output. No timestamps, so identical runs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Failure, Result};

pub const TOOL: &str = "msr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub params: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Subcommand-specific results such as exact bit counts.
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn record(path: &Path, bytes: &[u8]) -> FileRecord {
    FileRecord {
        path: path.to_path_buf(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    }
}

/// Collects inputs read and outputs written during one run.
#[derive(Debug, Default)]
pub struct Recorder {
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

impl Recorder {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Failure::from(e).context(path.display()))?;
        self.inputs.push(record(path, &bytes));
        Ok(bytes)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_file(path, bytes)?;
        self.outputs.push(record(path, bytes));
        Ok(())
    }

    pub fn finish(
        self,
        subcommand: &str,
        params: serde_json::Value,
        summary: serde_json::Value,
    ) -> RunManifest {
        RunManifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            params,
            inputs: self.inputs,
            outputs: self.outputs,
            summary,
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::from(e).context(dir.display()))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::from(e).context(path.display()))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &to_json_bytes(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Failure::from(e).context(path.display()))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
