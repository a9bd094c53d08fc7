//! Per-invocation run report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// What a command did: inputs digest, per-audit outcomes, artifacts.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub inputs_digest: String,
    /// audit name → passed; absent audits were not run
    pub passes: BTreeMap<String, bool>,
    pub notes: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(command: &str, canonical_config: &str, overrides_digested: bool) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(canonical_config.as_bytes());
        let _ = overrides_digested; // overrides are already merged into the canonical text
        Self {
            command: command.to_string(),
            inputs_digest: format!("{:x}", hasher.finalize()),
            passes: BTreeMap::new(),
            notes: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn record_pass(&mut self, name: &str, passed: bool) {
        self.passes.insert(name.to_string(), passed);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn all_passed(&self) -> bool {
        self.passes.values().all(|&p| p)
    }

    /// Write an artifact, remember it, and return its path.
    pub fn write_artifact(&mut self, dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(path.clone());
        Ok(path)
    }

    /// Serialize the report itself as `report.json` in `dir`.
    pub fn finalize(mut self, dir: &Path) -> Result<Self> {
        let path = dir.join("report.json");
        self.artifacts.push(path.clone());
        let json = collusion_lab::export::to_json_string(&self)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(self)
    }
}
