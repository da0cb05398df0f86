//! Run directories: atomic creation, file hashing and the cumulative manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";

/// A fresh run directory built under a sibling temporary path and moved into
/// place on commit, so a crashed run never leaves a half-written directory.
pub struct Staging {
    pub path: PathBuf,
    dest: PathBuf,
}

fn non_empty(dir: &Path) -> bool {
    fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(true)
}

impl Staging {
    pub fn create(dest: &Path, force: bool) -> Result<Self, CliError> {
        if dest.exists() && !force && (!dest.is_dir() || non_empty(dest)) {
            return Err(CliError::OutputExists(dest.to_path_buf()));
        }
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let name = dest
            .file_name()
            .ok_or_else(|| CliError::Usage(format!("invalid output directory {}", dest.display())))?;
        let mut tmp_name = std::ffi::OsString::from(".");
        tmp_name.push(name);
        tmp_name.push(format!(".tmp-{}", std::process::id()));
        let path = parent.join(tmp_name);
        if path.exists() {
            fs::remove_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        }
        fs::create_dir(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self {
            path,
            dest: dest.to_path_buf(),
        })
    }

    pub fn commit(self) -> Result<PathBuf, CliError> {
        if self.dest.exists() {
            if self.dest.is_dir() {
                fs::remove_dir_all(&self.dest).map_err(|e| CliError::io(&self.dest, e))?;
            } else {
                fs::remove_file(&self.dest).map_err(|e| CliError::io(&self.dest, e))?;
            }
        }
        fs::rename(&self.path, &self.dest).map_err(|e| CliError::io(&self.dest, e))?;
        Ok(self.dest.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.path.exists() {
            let _ = fs::remove_dir_all(&self.path);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<Box<Entry>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Option<Entry>,
    pub artifacts: Vec<Entry>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn entry(root: &Path, rel: &str) -> Result<Entry, CliError> {
    let (sha256, bytes) = sha256_file(&root.join(rel))?;
    let side_rel = format!("{rel}.json");
    let sidecar = if rel.ends_with(".f64") && root.join(&side_rel).exists() {
        Some(Box::new(entry(root, &side_rel)?))
    } else {
        None
    };
    Ok(Entry {
        path: rel.to_string(),
        sha256,
        bytes,
        sidecar,
    })
}

pub fn read_manifest(root: &Path) -> Result<Manifest, CliError> {
    let p = root.join(MANIFEST);
    if !p.exists() {
        return Ok(Manifest::default());
    }
    let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Core(e.into()))
}

/// Adds or refreshes entries for `rels` (paths relative to `root`).
pub fn update_manifest(root: &Path, rels: &[String]) -> Result<Manifest, CliError> {
    let mut m = read_manifest(root)?;
    if root.join(CONFIG).exists() {
        m.config = Some(entry(root, CONFIG)?);
    }
    for rel in rels {
        let e = entry(root, rel)?;
        match m.artifacts.iter_mut().find(|a| a.path == *rel) {
            Some(slot) => *slot = e,
            None => m.artifacts.push(e),
        }
    }
    m.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Core(e.into()))? + "\n";
    let p = root.join(MANIFEST);
    fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
    Ok(m)
}

pub fn write(root: &Path, rel: &str, contents: impl AsRef<[u8]>) -> Result<String, CliError> {
    let p = root.join(rel);
    if let Some(parent) = p.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
    Ok(rel.to_string())
}

pub fn read(root: &Path, rel: &str) -> Result<String, CliError> {
    let p = root.join(rel);
    if !p.exists() {
        return Err(CliError::MissingArtifact(p));
    }
    fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
}

pub fn require(root: &Path, rel: &str) -> Result<PathBuf, CliError> {
    let p = root.join(rel);
    if !p.exists() {
        return Err(CliError::MissingArtifact(p));
    }
    Ok(p)
}
