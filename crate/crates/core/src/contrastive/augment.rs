use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature-space augmentations: per-sample scaling by `1 + U(-j, j)`, additive
/// Gaussian noise, a colour-jitter shift on the trailing `color_dims`
/// coordinates, then zeroing each coordinate with probability `dropout`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub noise_scale: f64,
    pub dropout: f64,
    pub scale_jitter: f64,
    /// Standard deviation of the Gaussian noise added to each colour coordinate.
    pub color_jitter: f64,
    /// Number of trailing coordinates that carry colour (stain) information.
    pub color_dims: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            noise_scale: 0.05,
            dropout: 0.1,
            scale_jitter: 0.1,
            color_jitter: 0.0,
            color_dims: 0,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig {
            noise_scale: 0.0,
            dropout: 0.0,
            scale_jitter: 0.0,
            color_jitter: 0.0,
            color_dims: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("augment noise_scale must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("augment dropout must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.scale_jitter) {
            return Err(Error::Config("augment scale_jitter must lie in [0, 1)".into()));
        }
        if !(self.color_jitter >= 0.0 && self.color_jitter.is_finite()) {
            return Err(Error::Config("augment color_jitter must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn augment(features: &[f64], config: &AugmentConfig, rng: &mut impl Rng) -> Vec<f64> {
    let scale = if config.scale_jitter > 0.0 {
        1.0 + config.scale_jitter * (2.0 * rng.random::<f64>() - 1.0)
    } else {
        1.0
    };
    let color_start = features.len().saturating_sub(config.color_dims);
    features
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let mut y = x * scale;
            if config.noise_scale > 0.0 {
                let g: f64 = StandardNormal.sample(rng);
                y += config.noise_scale * g;
            }
            if config.color_jitter > 0.0 && j >= color_start {
                let g: f64 = StandardNormal.sample(rng);
                y += config.color_jitter * g;
            }
            if config.dropout > 0.0 && rng.random::<f64>() < config.dropout {
                y = 0.0;
            }
            y
        })
        .collect()
}
