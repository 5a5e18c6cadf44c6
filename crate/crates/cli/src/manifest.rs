//! Run manifests: effective config echo, tool version, seed, input content
//! hashes, and wall time, one `manifest.toml` per run so results are
//! auditable and reproducible.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Serialize)]
struct Manifest<'a> {
    run: RunInfo,
    config: &'a RunConfig,
    inputs: Vec<InputHash>,
}

#[derive(Serialize)]
struct RunInfo {
    subcommand: String,
    version: String,
    seed: u64,
    wall_seconds: f64,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

pub struct ManifestBuilder {
    subcommand: String,
    inputs: Vec<PathBuf>,
    notes: Vec<String>,
    started: std::time::Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            inputs: Vec::new(),
            notes: Vec::new(),
            started: std::time::Instant::now(),
        }
    }

    /// Register an input file whose content hash goes into the manifest.
    pub fn input(&mut self, path: &Path) {
        if path.is_file() {
            self.inputs.push(path.to_path_buf());
        }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn write(self, out_dir: &Path, config: &RunConfig) -> Result<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p)
                    .with_context(|| format!("cannot hash input {}", p.display()))?;
                let mut hasher = Sha256::new();
                hasher.update(&bytes);
                Ok(InputHash {
                    path: p.display().to_string(),
                    sha256: format!("{:x}", hasher.finalize()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            run: RunInfo {
                subcommand: self.subcommand,
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.battery.seed,
                wall_seconds: self.started.elapsed().as_secs_f64(),
                notes: self.notes,
            },
            config,
            inputs,
        };
        let text = toml::to_string_pretty(&manifest).context("manifest serialization")?;
        std::fs::write(out_dir.join("manifest.toml"), text)
            .with_context(|| format!("cannot write manifest in {}", out_dir.display()))?;
        Ok(())
    }
}
