//! Output directories and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// A directory that records the digest of every file written into it.
pub struct OutDir {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json`, which is itself excluded from the digests.
    pub fn finish(self, mut manifest: Manifest) -> Result<()> {
        manifest.finished_at = chrono::Utc::now().to_rfc3339();
        manifest.outputs = self.outputs;
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Drawn,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub software_version: String,
    /// Fully resolved configuration; rerunning with it reproduces the outputs.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub threads: usize,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, seed_source: SeedSource) -> Result<Self> {
        let config_hash = sha256_hex(&serde_json::to_vec(&config)?);
        Ok(Self {
            command: command.to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            config_hash,
            seed,
            seed_source,
            threads: rayon::current_num_threads(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }
}
