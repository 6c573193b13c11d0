//! Artifact manifests: every command output records the content hashes of
//! its inputs so downstream stages can refuse silently modified chains.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|_| Error::MissingInput(path.display().to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut p = artifact.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Manifest {
        Manifest { command: command.to_string(), seed, inputs: vec![], outputs: vec![] }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileStamp {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileStamp {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Writes the manifest next to the primary artifact.
    pub fn write_for(&self, artifact: &Path) -> Result<()> {
        let path = manifest_path(artifact);
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_for(artifact: &Path) -> Result<Manifest> {
        let path = manifest_path(artifact);
        let text = std::fs::read_to_string(&path)
            .map_err(|_| Error::MissingInput(path.display().to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-hashes every recorded input and fails on the first mismatch.
    pub fn verify_inputs(&self) -> Result<()> {
        for stamp in &self.inputs {
            let current = sha256_file(Path::new(&stamp.path))?;
            if current != stamp.sha256 {
                return Err(Error::HashMismatch { path: stamp.path.clone() });
            }
        }
        Ok(())
    }
}
