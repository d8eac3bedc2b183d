use std::fs;
use std::path::{Path, PathBuf};

use conceptprobe_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Everything needed to reproduce one command invocation. Contains no
/// timestamps so equal runs yield equal manifests.
#[derive(Serialize)]
pub struct RunManifest {
    command: &'static str,
    tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &'static str, config: impl Serialize, seed: Option<u64>) -> Self {
        Self {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: digest(path)?,
        });
        Ok(())
    }

    /// Outputs are recorded by file name so manifests from different output
    /// directories compare equal.
    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest {
            path: path
                .file_name()
                .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
            sha256: digest(path)?,
        });
        Ok(())
    }

    /// Writes `<primary>.manifest.json` and returns its path.
    pub fn write_beside(&self, primary: &Path) -> Result<PathBuf> {
        let path = sibling(primary, "manifest.json");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }
}

/// `dir/name.ext` -> `dir/name.ext.<suffix>`
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}
