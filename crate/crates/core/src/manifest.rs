use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// What a command ran on and what it produced. Contains no timestamps, so
/// reruns with the same inputs write identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub corpus: Option<PathBuf>,
    pub corpus_sha256: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub metrics: serde_json::Value,
    pub ok: bool,
    pub errors: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            config: serde_json::Value::Null,
            corpus: None,
            corpus_sha256: None,
            checkpoint: None,
            outputs: Vec::new(),
            metrics: serde_json::Value::Null,
            ok: true,
            errors: Vec::new(),
        }
    }

    /// Records the corpus path and its checksum.
    pub fn with_corpus(mut self, path: &Path) -> Result<Self> {
        self.corpus_sha256 = Some(sha256_file(path)?);
        self.corpus = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn fail(&mut self, msg: impl Into<String>) {
        self.ok = false;
        self.errors.push(msg.into());
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(sha256_hex(&bytes))
}
