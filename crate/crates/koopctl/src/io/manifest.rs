//! Per-command manifest recording how an output directory was produced.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_file, IoError, IoResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// No wall-clock fields, so identical runs write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full argument vector, enough to re-run the command.
    pub args: Vec<String>,
    pub seed: u64,
    pub config: Option<serde_json::Value>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub exit_code: i32,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            seed,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            exit_code: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> IoResult<()> {
        self.inputs.push(record(path)?);
        Ok(())
    }

    /// Records an output if it exists; stages that failed leave none.
    pub fn add_output(&mut self, path: &Path) -> IoResult<()> {
        if path.is_file() {
            self.outputs.push(record(path)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> IoResult<()> {
        super::write_json(&dir.join(format!("{}.manifest.json", self.command)), self)
    }
}

fn record(path: &Path) -> IoResult<FileRecord> {
    Ok(FileRecord {
        path: path.display().to_string(),
        sha256: file_sha256(path)?,
    })
}

pub fn file_sha256(path: &Path) -> IoResult<String> {
    let bytes = std::fs::read(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_manifest(path: &Path) -> IoResult<Manifest> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}
