//! Output directories: atomic file writes and the run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// File name to SHA-256 of the bytes written by this stage.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub output_dir: PathBuf,
    pub stages: Vec<StageRecord>,
    /// Latest hash of every file any stage produced in this directory.
    pub files: BTreeMap<String, String>,
}

/// Collects a stage's outputs, then writes them and the manifest.
pub struct StageOutput {
    dir: PathBuf,
    record: StageRecord,
    pending: Vec<(String, Vec<u8>)>,
}

impl StageOutput {
    pub fn new(dir: &Path, stage: &str, config: Option<&Path>, seed: Option<u64>) -> Self {
        Self {
            dir: dir.to_path_buf(),
            record: StageRecord {
                stage: stage.to_string(),
                config: config.map(Path::to_path_buf),
                seed,
                inputs: Vec::new(),
                started_unix_ms: unix_ms(),
                finished_unix_ms: 0,
                outputs: BTreeMap::new(),
                notes: BTreeMap::new(),
            },
            pending: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.record.inputs.push(path.to_path_buf());
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.record.notes.insert(key.to_string(), value.into());
    }

    /// Queues a file; nothing touches the disk until [`Self::commit`].
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.pending.push((name.to_string(), bytes));
    }

    /// Writes every queued file, then the updated manifest. Returns the
    /// written paths.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let manifest_path = self.dir.join(MANIFEST);
        let mut manifest = match std::fs::read(&manifest_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .with_context(|| format!("existing {} is not a run manifest", manifest_path.display()))?,
            Err(_) => RunManifest::default(),
        };
        manifest.output_dir = self.dir.clone();

        let mut written = Vec::new();
        for (name, bytes) in &self.pending {
            let path = self.dir.join(name);
            write_atomic(&path, bytes)?;
            let hash = sha256_hex(bytes);
            self.record.outputs.insert(name.clone(), hash.clone());
            manifest.files.insert(name.clone(), hash);
            written.push(path);
        }
        self.record.finished_unix_ms = unix_ms();
        manifest.stages.push(self.record);
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        write_atomic(&manifest_path, &json)?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_accumulates_stages() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = StageOutput::new(dir.path(), "one", None, Some(1));
        a.add("a.txt", b"first".to_vec());
        a.commit().unwrap();
        let mut b = StageOutput::new(dir.path(), "two", None, None);
        b.add("b.txt", b"second".to_vec());
        b.commit().unwrap();

        let m: RunManifest = serde_json::from_slice(&std::fs::read(dir.path().join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(m.stages.len(), 2);
        assert_eq!(m.files.len(), 2);
        assert_eq!(m.files["a.txt"], sha256_hex(b"first"));
        assert_eq!(std::fs::read(dir.path().join("b.txt")).unwrap(), b"second");
    }

    #[test]
    fn no_temp_files_left_behind() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("x"), b"1").unwrap();
        write_atomic(&dir.path().join("x"), b"22").unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("x")]);
        assert_eq!(std::fs::read(dir.path().join("x")).unwrap(), b"22");
    }
}
