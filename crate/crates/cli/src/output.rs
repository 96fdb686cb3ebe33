//! Artifact staging: everything is rendered in memory first, then each file is
//! written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use tempfile::NamedTempFile;

use crate::run::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub config_path: Option<PathBuf>,
    /// Fully resolved config, defaults included; passing it back through
    /// `--config` with the same seed reproduces the artifacts.
    pub config: Value,
    pub artifacts: Vec<String>,
}

#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Run(format!("serializing output: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        self.add(name, json_bytes(value)?);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|f| f.0.clone()).collect()
    }

    /// Writes every artifact and then the manifest into `dir`.
    pub fn commit(mut self, dir: &Path, manifest: &Manifest) -> Result<(), Failure> {
        let io = |e: std::io::Error| Failure::Run(format!("writing to {}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        self.add(MANIFEST, json_bytes(manifest)?);
        for (name, bytes) in &self.files {
            let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(bytes).map_err(io)?;
            tmp.as_file().sync_all().map_err(io)?;
            tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
        }
        Ok(())
    }
}
