use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_at, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

/// An output file and the SHA-256 of its contents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn new(file: &str, contents: &[u8]) -> Self {
        FileEntry {
            file: file.to_string(),
            sha256: sha256_hex(contents),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record written next to every run's outputs, enough to replay it.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub parameters: serde_json::Value,
    pub outputs: Vec<FileEntry>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Versioned<'a> {
            tool: &'static str,
            version: &'static str,
            #[serde(flatten)]
            manifest: &'a Manifest,
        }
        let text = serde_json::to_string_pretty(&Versioned {
            tool: "imo",
            version: env!("CARGO_PKG_VERSION"),
            manifest: self,
        })?;
        let path = dir.join(MANIFEST_NAME);
        fs::write(&path, text + "\n").map_err(io_at(&path))
    }
}
