//! Run manifest: what produced which file, with digests, and what became of
//! every nucleus.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    /// Written before the first stage and kept until the last one finishes,
    /// so an interrupted run is recognizable.
    Incomplete,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NucleusStatus {
    Ok,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucleusRecord {
    pub id: String,
    pub class_label: String,
    pub phantom_seed: u64,
    pub hologram_seed: u64,
    /// Nucleus center `(x, y)` in its ROI, pixels.
    pub center: [f64; 2],
    pub status: NucleusStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl NucleusRecord {
    pub fn is_ok(&self) -> bool {
        self.status == NucleusStatus::Ok
    }

    pub fn drop_with(&mut self, stage: &str, reason: impl Into<String>) {
        self.status = NucleusStatus::Dropped;
        self.dropped_at = Some(stage.to_string());
        self.reason = Some(reason.into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub nuclei: Vec<NucleusRecord>,
}

impl Manifest {
    pub fn new(config_sha256: String, seed: u64, nuclei: Vec<NucleusRecord>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: RunStatus::Incomplete,
            error: None,
            config_sha256,
            seed,
            stages: Vec::new(),
            nuclei,
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::read(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::read(&path, e))
    }

    /// Writes `dir/manifest.json` through a temporary file and a rename, so
    /// a reader never sees half a manifest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let tmp = dir.join(".manifest.json.tmp");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&tmp, text).map_err(|e| Error::write(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::write(&path, e))
    }

    pub fn dropped_fraction(&self) -> f64 {
        if self.nuclei.is_empty() {
            return 0.0;
        }
        let dropped = self.nuclei.iter().filter(|n| !n.is_ok()).count();
        dropped as f64 / self.nuclei.len() as f64
    }

    pub fn nucleus_mut(&mut self, id: &str) -> Option<&mut NucleusRecord> {
        self.nuclei.iter_mut().find(|n| n.id == id)
    }

    /// Every output of every stage, in stage order.
    pub fn outputs(&self) -> impl Iterator<Item = &FileDigest> {
        self.stages.iter().flat_map(|s| s.outputs.iter())
    }
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    Ok((hex(&Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Digest of `path`, recorded relative to `root`.
pub fn digest(root: &Path, path: &Path) -> Result<FileDigest> {
    let (sha256, bytes) = sha256_file(path)?;
    let rel = path.strip_prefix(root).unwrap_or(path);
    let rel = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/");
    Ok(FileDigest {
        path: rel,
        sha256,
        bytes,
    })
}

pub fn digest_all(root: &Path, paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths.iter().map(|p| digest(root, p)).collect()
}

/// Files under `dir` (recursively) that are not the manifest itself, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::read(&d, e))? {
            let path = entry.map_err(|e| Error::read(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path != dir.join(MANIFEST_NAME) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Checks that the files under `dir` are exactly the manifest's outputs and
/// that every digest matches. Returns the problems found.
pub fn verify(dir: &Path) -> Result<Vec<String>> {
    let m = Manifest::read(dir)?;
    let mut problems = Vec::new();
    let listed: std::collections::BTreeMap<&str, &FileDigest> =
        m.outputs().map(|f| (f.path.as_str(), f)).collect();
    let mut seen = std::collections::BTreeSet::new();
    for path in list_files(dir)? {
        let d = digest(dir, &path)?;
        match listed.get(d.path.as_str()) {
            None => problems.push(format!("{} is not in the manifest", d.path)),
            Some(f) if f.sha256 != d.sha256 => problems.push(format!("{} digest differs", d.path)),
            Some(_) => {}
        }
        seen.insert(d.path);
    }
    for p in listed.keys() {
        if !seen.contains(*p) {
            problems.push(format!("{p} is listed but missing"));
        }
    }
    Ok(problems)
}
