//! Output files and the run manifest.
//!
//! CSV bodies are produced with Rust's own float formatting, so they never
//! depend on the process locale, and lines end in a bare `\n`. The manifest
//! holds no timestamps or host details: rerunning the same command gives the
//! same bytes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the compact JSON form of a fully-resolved config.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

/// Renders a CSV writer callback into memory.
pub fn render_csv(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Per-topology bookkeeping of discarded work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscardRecord {
    pub topology: String,
    pub failed_drops: usize,
    pub discarded_realizations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub software: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub discards: Vec<DiscardRecord>,
    pub files: Vec<FileRecord>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self> {
        Ok(Manifest {
            software: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: config.seed,
            config_sha256: config_hash(config)?,
            config: config.clone(),
            discards: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes files into one directory and records them for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    records: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(root.as_ref())?;
        Ok(OutputDir {
            root: root.as_ref().to_path_buf(),
            records: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes)?;
        self.records.push(FileRecord {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(self, mut manifest: Manifest) -> Result<PathBuf> {
        manifest.files = self.records;
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, manifest.to_json()?)?;
        Ok(path)
    }
}
