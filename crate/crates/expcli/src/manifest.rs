//! Run manifests: written before any numeric output, finalised with a
//! SHA-256 inventory of everything the run produced.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
    pub outputs: Vec<OutputEntry>,
}

/// Open manifest of a run in progress.
#[derive(Debug)]
pub struct ManifestWriter {
    dir: PathBuf,
    manifest: RunManifest,
    files: Vec<PathBuf>,
}

impl ManifestWriter {
    /// Creates the output directory and writes the manifest with status `running`.
    pub fn begin(dir: &Path, experiment: &str, config: serde_json::Value, master_seed: u64) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let w = Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                experiment: experiment.to_string(),
                config,
                master_seed,
                code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
                started_at: chrono::Utc::now().to_rfc3339(),
                finished_at: None,
                status: "running".into(),
                outputs: Vec::new(),
            },
            files: Vec::new(),
        };
        w.flush()?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for a new output file, registered for the inventory.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        if !self.files.contains(&p) {
            self.files.push(p.clone());
        }
        p
    }

    fn flush(&self) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(self.dir.join(MANIFEST_FILE), text + "\n")
    }

    /// Digests every registered output and records the final status.
    pub fn finish(mut self, status: &str) -> std::io::Result<RunManifest> {
        let mut outputs = Vec::new();
        for p in &self.files {
            let bytes = fs::read(p)?;
            outputs.push(OutputEntry {
                path: p
                    .strip_prefix(&self.dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned(),
                bytes: bytes.len() as u64,
                sha256: hex(&Sha256::digest(&bytes)),
            });
        }
        self.manifest.outputs = outputs;
        self.manifest.status = status.to_string();
        self.manifest.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.flush()?;
        Ok(self.manifest)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
