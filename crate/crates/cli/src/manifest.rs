//! Run manifests: what ran, on which inputs, producing which files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Digests of every regular file under `path` (the file itself when it is
/// one), sorted by path.
pub fn digest_inputs(path: &Path) -> Result<Vec<FileDigest>, CliError> {
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    files
        .iter()
        .map(|f| {
            let absolute = fs::canonicalize(f).unwrap_or_else(|_| f.clone());
            Ok(FileDigest {
                path: absolute.display().to_string(),
                sha256: sha256_file(f)?,
            })
        })
        .collect()
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|e| CliError::data(format!("cannot list {}: {e}", path.display())))?;
        for entry in entries {
            let entry = entry.map_err(|e| CliError::data(e.to_string()))?;
            collect_files(&entry.path(), out)?;
        }
    } else if path.is_file() {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Collects written files and finally the manifest describing them.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::data(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::numerical(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        manifest.outputs = self
            .written
            .iter()
            .map(|name| {
                Ok(FileDigest {
                    path: name.clone(),
                    sha256: sha256_file(&self.root.join(name))?,
                })
            })
            .collect::<Result<_, CliError>>()?;
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::numerical(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Files whose current digest differs from the manifest (or that are
/// missing).
pub fn verify(manifest_path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{}: not a run manifest: {e}", manifest_path.display())))?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut bad = Vec::new();
    let outputs = manifest.outputs.iter().map(|d| (root.join(&d.path), d));
    let inputs = manifest.inputs.iter().map(|d| (PathBuf::from(&d.path), d));
    for (path, digest) in inputs.chain(outputs) {
        match sha256_file(&path) {
            Ok(h) if h == digest.sha256 => {}
            Ok(_) => bad.push(format!("{}: digest mismatch", path.display())),
            Err(_) => bad.push(format!("{}: missing", path.display())),
        }
    }
    Ok(bad)
}
