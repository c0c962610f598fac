//! Output directory bookkeeping and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved command settings; defaults and config values filled in.
    pub settings: serde_json::Value,
    pub seed: Option<u64>,
    pub config_sha256: String,
    /// The configuration text, verbatim.
    pub config: String,
    pub params: atlas_lab::Params,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }
}

/// Writes files into the output directory and records their hashes.
pub struct OutDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(OutputFile {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn json<S: Serialize + ?Sized>(&mut self, name: &str, value: &S) -> Result<(), Failure> {
        let s = atlas_lab::export::to_json_string(value)?;
        self.write(name, s.as_bytes())
    }

    /// Render with a writer-based exporter into memory, then write.
    pub fn render(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> atlas_lab::Result<()>,
    ) -> Result<(), Failure> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<Vec<OutputFile>, Failure> {
        manifest.outputs = self.files.clone();
        manifest.finished_unix = unix_now();
        let s = atlas_lab::export::to_json_string(&manifest)?;
        std::fs::write(self.dir.join(MANIFEST), s)
            .map_err(|e| Failure::input(format!("cannot write manifest: {e}")))?;
        Ok(self.files)
    }
}
