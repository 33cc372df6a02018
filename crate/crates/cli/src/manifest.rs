//! `manifest.json`: what ran, with which flags, on which inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Debug, Serialize)]
struct Entry {
    path: PathBuf,
    sha256: String,
}

pub struct Manifest {
    command: &'static str,
    flags: serde_json::Value,
    seed: u64,
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
    started: Instant,
}

impl Manifest {
    pub fn new(command: &'static str, flags: serde_json::Value, seed: u64) -> Self {
        Self {
            command,
            flags,
            seed,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    /// Hash everything recorded so far and write the manifest into `dir`.
    pub fn write(self, dir: &Path) -> std::io::Result<PathBuf> {
        let digest = |paths: &[PathBuf]| -> std::io::Result<Vec<Entry>> {
            paths
                .iter()
                .map(|p| {
                    Ok(Entry {
                        path: p.clone(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let mut doc = BTreeMap::new();
        doc.insert("command", serde_json::json!(self.command));
        doc.insert("flags", self.flags);
        doc.insert("seed", serde_json::json!(self.seed));
        doc.insert("inputs", serde_json::to_value(digest(&self.inputs)?)?);
        doc.insert("artifacts", serde_json::to_value(digest(&self.artifacts)?)?);
        doc.insert(
            "duration_secs",
            serde_json::json!(self.started.elapsed().as_secs_f64()),
        );
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_vec_pretty(&doc)?;
        text.push(b'\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
