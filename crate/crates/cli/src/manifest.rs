use std::path::{Path, PathBuf};

use molgate::config::RunConfig;
use molgate::experiments::VERSION;
use molgate::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub elapsed_seconds: f64,
    pub files: Vec<FileEntry>,
    pub summary: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok((
        digest.iter().map(|b| format!("{b:02x}")).collect(),
        bytes.len() as u64,
    ))
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            tool: "molgate",
            version: VERSION,
            command: command.into(),
            config_hash: config.hash(),
            config: config.clone(),
            elapsed_seconds: 0.0,
            files: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn add(&mut self, path: PathBuf) -> Result<()> {
        let (sha256, bytes) = sha256_file(&path)?;
        self.files.push(FileEntry {
            path,
            sha256,
            bytes,
        });
        Ok(())
    }

    /// Writes `manifest_<command>_<hash>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!(
            "manifest_{}_{}.json",
            self.command, self.config_hash
        ));
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}
