use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fsutil::write_string;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

/// Provenance of an output directory: what was run, on which inputs, with
/// which seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub fold_seeds: Vec<u64>,
    /// Input files, or `synthetic` for a generated cohort.
    pub inputs: Vec<String>,
    pub cohort_seed: Option<u64>,
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, fold_seeds: Vec<u64>) -> Result<Self> {
        let (inputs, cohort_seed) = match &cfg.embeddings {
            Some(p) => (vec![p.tiles.display().to_string(), p.outcomes.display().to_string()], None),
            None => (vec!["synthetic".to_string()], Some(cfg.cohort.seed)),
        };
        Ok(Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            fold_seeds,
            inputs,
            cohort_seed,
            files: Vec::new(),
        })
    }
}

/// Hashes each listed file under `dir` and writes the manifest there as
/// `file_name`.
pub fn write_manifest(mut manifest: Manifest, dir: &Path, files: &[String], file_name: &str) -> Result<Manifest> {
    manifest.files = files
        .iter()
        .map(|name| {
            let path = dir.join(name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            Ok(ManifestFile {
                name: name.clone(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            })
        })
        .collect::<Result<_>>()?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_string(&dir.join(file_name), &text)?;
    Ok(manifest)
}
