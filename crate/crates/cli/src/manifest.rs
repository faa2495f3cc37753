//! Run manifests: the last file a command writes.
//!
//! A manifest snapshots the full configuration, lists every artifact the run
//! emitted, and records per-stage wall-clock timings. Because it is written
//! last (atomically, via a temp file rename), its presence marks a completed
//! run, and because the config snapshot is embedded, passing a manifest to
//! `--config` regenerates the artifacts bit-identically.

use std::collections::BTreeMap;
use std::path::Path;

use abclin::error::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MANIFEST_FORMAT: &str = "abclin.manifest/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub library_version: String,
    /// Which command produced this manifest.
    pub command: String,
    pub config: RunConfig,
    /// Artifact name -> path relative to the manifest's directory.
    pub artifacts: BTreeMap<String, String>,
    /// Stage name -> wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            artifacts: BTreeMap::new(),
            timings: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn add_artifact(&mut self, name: &str, path: &Path) {
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.artifacts.insert(name.to_string(), file);
    }

    pub fn add_timing(&mut self, stage: &str, seconds: f64) {
        self.timings.insert(stage.to_string(), seconds);
    }

    /// Serialize and move into place; no partial manifest is ever visible.
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let tmp = path.with_extension("toml.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        let manifest: RunManifest = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: format!("format tag '{}' is not {MANIFEST_FORMAT}", manifest.format),
            });
        }
        Ok(manifest)
    }
}
