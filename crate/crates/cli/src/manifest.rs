//! `manifest.json`: config hash, build id and checksummed stage artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub build: String,
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

pub fn build_id() -> String {
    match option_env!("LTCAS_BUILD_ID") {
        Some(id) => format!("ltcas {} ({id})", env!("CARGO_PKG_VERSION")),
        None => format!("ltcas {}", env!("CARGO_PKG_VERSION")),
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(format!("{:x}", Sha256::digest(fs::read(path)?)))
}

impl Manifest {
    pub fn new(config_hash: String) -> Self {
        Self {
            config_hash,
            build: build_id(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn load(out: &Path) -> CliResult<Option<Self>> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
    }

    pub fn save(&self, out: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(out.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    /// Checksums a freshly written artifact and records it.
    pub fn record(&mut self, out: &Path, file: &str, stage: &str, seconds: f64) -> CliResult<()> {
        let sha256 = sha256_file(&out.join(file))?;
        self.artifacts.insert(
            file.to_string(),
            ArtifactEntry {
                path: file.to_string(),
                sha256,
                stage: stage.to_string(),
                seconds,
            },
        );
        Ok(())
    }

    pub fn contains(&self, file: &str) -> bool {
        self.artifacts.contains_key(file)
    }

    /// Path of a recorded artifact after checking it still matches its checksum.
    pub fn verify(&self, out: &Path, file: &str, stage: &'static str) -> CliResult<PathBuf> {
        let entry = self
            .artifacts
            .get(file)
            .ok_or_else(|| CliError::Dependency {
                stage,
                detail: format!("{file} is not in the manifest"),
            })?;
        let path = out.join(&entry.path);
        if !path.exists() {
            return Err(CliError::Dependency {
                stage,
                detail: format!("{} is missing on disk", path.display()),
            });
        }
        if sha256_file(&path)? != entry.sha256 {
            return Err(CliError::Tampered {
                artifact: file.to_string(),
            });
        }
        Ok(path)
    }

    /// Every recorded artifact exists and matches its checksum.
    pub fn verify_all(&self, out: &Path) -> CliResult<()> {
        for name in self.artifacts.keys() {
            self.verify(out, name, "gen-data")?;
        }
        Ok(())
    }
}
