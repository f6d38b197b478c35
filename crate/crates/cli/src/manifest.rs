//! Run manifest: everything needed to reproduce the numbers of a run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIdentity {
    pub path: PathBuf,
    pub name: String,
    /// SHA-256 over the dataset's files in name order.
    pub sha256: String,
}

impl DatasetIdentity {
    pub fn of(dir: &Path, name: &str) -> Result<Self> {
        Ok(DatasetIdentity {
            path: dir.to_path_buf(),
            name: name.to_string(),
            sha256: hash_dataset(dir, name)?,
        })
    }
}

/// Hashes every `<name>_*` file in `dir`, sorted by file name. The file
/// name is part of the digest so renaming a component changes the hash.
pub fn hash_dataset(dir: &Path, name: &str) -> Result<String> {
    let prefix = format!("{name}_");
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading dataset directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().and_then(|f| f.to_str()).is_some_and(|f| f.starts_with(&prefix)))
        .collect();
    files.sort();
    let mut hasher = Sha256::new();
    for f in &files {
        let body = fs::read(f).with_context(|| format!("reading {}", f.display()))?;
        hasher.update(f.file_name().unwrap().as_encoded_bytes());
        hasher.update((body.len() as u64).to_le_bytes());
        hasher.update(&body);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    /// Full effective configuration, defaults included.
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub dataset: Option<DatasetIdentity>,
    pub version: String,
    pub started_unix: u64,
    /// `None` until every output has been written.
    pub finished_unix: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(config: &RunConfig, seeds: &[u64], dataset: Option<DatasetIdentity>) -> Self {
        RunManifest {
            command: std::env::args().collect(),
            config: config.clone(),
            seeds: seeds.to_vec(),
            dataset,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_seconds(),
            finished_unix: None,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn finish(mut self, out: &Path, outputs: Vec<PathBuf>) -> Result<()> {
        self.outputs = outputs;
        self.finished_unix = Some(unix_seconds());
        self.write(out)
    }
}
