//! Run manifests: what a command read, what it wrote, and hashes of both.
//!
//! Artifact paths are relative to the run's output directory; input paths
//! are stored as given on the command line.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use hydrotrace_core::grid::io::dataset_files;
use hydrotrace_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    /// Hashes `root/rel`.
    pub fn hash(root: &Path, rel: &Path) -> Result<Self> {
        let (sha256, bytes) = sha256_file(&root.join(rel))?;
        Ok(Self {
            path: rel.to_path_buf(),
            sha256,
            bytes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Content hash of the dataset the command read or wrote.
    pub dataset_fingerprint: Option<String>,
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
    pub checkpoint: Option<PathBuf>,
    pub metric_report: Option<PathBuf>,
    pub attention_store: Option<PathBuf>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunManifest {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(out_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(out_dir.join(MANIFEST_FILE))?)?)
    }

    /// Re-hashes every listed artifact; returns the paths that no longer
    /// match.
    pub fn verify(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        let mut stale = Vec::new();
        for a in &self.artifacts {
            match Artifact::hash(out_dir, &a.path) {
                Ok(now) if now == *a => {}
                Ok(_) => stale.push(a.path.clone()),
                Err(Error::Io(_)) => stale.push(a.path.clone()),
                Err(e) => return Err(e),
            }
        }
        Ok(stale)
    }
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

/// Hash over the dataset files of `dir`, by file name and content; where
/// the directory lives does not matter.
pub fn dataset_fingerprint(dir: &Path) -> Result<String> {
    let files = dataset_files(dir)?;
    if files.is_empty() {
        return Err(Error::Format(format!("{}: no dataset files", dir.display())));
    }
    let mut hasher = Sha256::new();
    for f in files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let (digest, bytes) = sha256_file(&f)?;
        hasher.update(format!("{name}\n{bytes}\n{digest}\n").as_bytes());
    }
    Ok(hex::encode(hasher.finalize()))
}

/// First 16 hex digits of the hash of everything that determines a run.
pub fn run_id(command: &str, config: &serde_json::Value, fingerprint: Option<&str>, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update([0]);
    hasher.update(config.to_string().as_bytes());
    hasher.update([0]);
    hasher.update(fingerprint.unwrap_or("").as_bytes());
    hasher.update([0]);
    hasher.update(seed.to_le_bytes());
    hex::encode(hasher.finalize())[..16].to_string()
}
