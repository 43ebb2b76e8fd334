use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{generate_cohort, load_embeddings, Cohort, CohortConfig, SplitFractions};
use crate::contrastive::TrainConfig;
use crate::error::{Error, Result};
use crate::sampling::SamplerMode;
use crate::survival::NetConfig;

/// Tile and outcome files produced by `save_embeddings` / `save_outcomes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingPaths {
    pub tiles: PathBuf,
    pub outcomes: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Candidate mixture sizes; the validation split picks one per fold.
    pub k_grid: Vec<usize>,
    /// Used when validation cannot rank the candidates.
    pub k_default: usize,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            k_grid: vec![10, 50, 100],
            k_default: 50,
            tolerance: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalConfig {
    pub alpha_grid: Vec<f64>,
    pub alpha_default: f64,
    /// Brier horizon in 6-month units.
    pub horizon: f64,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        SurvivalConfig {
            alpha_grid: vec![0.01, 0.1, 1.0, 10.0],
            alpha_default: 0.1,
            horizon: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub net: NetConfig,
    /// Hidden width of the MIL attention scorer.
    pub attention_dim: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            net: NetConfig::default(),
            attention_dim: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub folds: usize,
    pub output_dir: PathBuf,
    pub split: SplitFractions,
    /// Synthetic cohort, used unless `embeddings` is set.
    pub cohort: CohortConfig,
    pub embeddings: Option<EmbeddingPaths>,
    pub train: TrainConfig,
    pub clustering: ClusteringConfig,
    pub survival: SurvivalConfig,
    pub baselines: BaselineConfig,
    pub ablation_arms: Vec<SamplerMode>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            folds: 5,
            output_dir: PathBuf::from("out"),
            split: SplitFractions::default(),
            cohort: CohortConfig::default(),
            embeddings: None,
            train: TrainConfig::default(),
            clustering: ClusteringConfig::default(),
            survival: SurvivalConfig::default(),
            baselines: BaselineConfig::default(),
            ablation_arms: default_arms(),
        }
    }
}

pub fn default_arms() -> Vec<SamplerMode> {
    vec![
        SamplerMode::FullyConditional,
        SamplerMode::Conditional(4),
        SamplerMode::Conditional(16),
        SamplerMode::Conditional(32),
        SamplerMode::Random,
    ]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    /// Content hash of the experiment. The output directory is not part of it.
    pub fn hash(&self) -> Result<String> {
        let mut cfg = self.clone();
        cfg.output_dir = PathBuf::new();
        let digest = Sha256::digest(cfg.to_toml()?.as_bytes());
        Ok(hex::encode(digest))
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        match &self.embeddings {
            Some(p) => {
                for path in [&p.tiles, &p.outcomes] {
                    if !path.exists() {
                        return Err(Error::Config(format!("input file {} does not exist", path.display())));
                    }
                }
            }
            None => self.cohort.validate()?,
        }
        self.train.validate()?;
        let c = &self.clustering;
        if c.k_grid.is_empty() || c.k_grid.contains(&0) || c.k_default == 0 {
            return Err(Error::Config("clustering k values must be positive and k_grid non-empty".into()));
        }
        if c.tolerance.is_nan() || c.tolerance < 0.0 || c.max_iter == 0 {
            return Err(Error::Config("clustering tolerance must be >= 0 and max_iter >= 1".into()));
        }
        let s = &self.survival;
        if s.alpha_grid.is_empty() || s.alpha_grid.iter().chain([&s.alpha_default]).any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::Config("alpha values must be finite and >= 0, alpha_grid non-empty".into()));
        }
        if !(s.horizon >= 0.0 && s.horizon.is_finite()) {
            return Err(Error::Config("Brier horizon must be >= 0".into()));
        }
        self.baselines.net.validate()?;
        if self.baselines.attention_dim == 0 {
            return Err(Error::Config("attention_dim must be positive".into()));
        }
        for arm in &self.ablation_arms {
            crate::sampling::BatchSpec::new(self.train.batch_size, *arm)?;
        }
        Ok(())
    }

    /// The cohort the experiment runs on.
    pub fn load_cohort(&self) -> Result<Cohort> {
        match &self.embeddings {
            Some(p) => load_embeddings(&p.tiles, &p.outcomes),
            None => generate_cohort(&self.cohort),
        }
    }
}
