//! Momentum-contrast training of a small tile encoder.
//!
//! A query encoder is trained with InfoNCE against keys produced by a
//! momentum (EMA) copy of itself; keys from past batches are kept in a FIFO
//! queue and serve as additional negatives. Batches come from
//! [`crate::sampling`], which is where slide-conditional sampling enters.

mod augment;
mod checkpoint;
mod loss;
mod probe;
mod queue;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;

pub use augment::{augment, AugmentConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, save_loss_trace};
pub use loss::{
    compute_keys, info_nce_loss, loss_and_gradient, loss_and_gradient_with_keys, BatchViews,
};
pub use probe::{slide_probe, ProbeResult};
pub use queue::KeyQueue;
pub use train::{embed_tiles, train, LrSchedule, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub temperature: f64,
    pub momentum: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: 64,
            embed_dim: 128,
            temperature: 0.07,
            momentum: 0.999,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::Config("encoder hidden and embed_dim must be positive".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub query: Mlp,
    /// Exponential moving average of `query`.
    pub key: Mlp,
    pub queue: KeyQueue,
    pub temperature: f64,
    pub momentum: f64,
    pub epoch: usize,
}

impl EncoderState {
    pub fn new(input: usize, config: &EncoderConfig, queue_size: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let query = Mlp::random(input, config.hidden, config.embed_dim, rng);
        Ok(EncoderState {
            key: query.clone(),
            query,
            queue: KeyQueue::new(queue_size, config.embed_dim),
            temperature: config.temperature,
            momentum: config.momentum,
            epoch: 0,
        })
    }
}

/// Unit-norm embedding of one tile.
pub fn encode(net: &Mlp, features: &[f64]) -> Result<Vec<f64>> {
    if features.len() != net.input {
        return Err(Error::Dimension {
            expected: net.input,
            found: features.len(),
        });
    }
    let mut u = net.forward(features);
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::NonFinite(format!("encoder output norm {norm}")));
    }
    u.iter_mut().for_each(|x| *x /= norm);
    Ok(u)
}

/// `key <- mu * key + (1 - mu) * query`, elementwise.
pub fn momentum_update(key: &mut [f64], query: &[f64], mu: f64) {
    debug_assert_eq!(key.len(), query.len());
    for (k, q) in key.iter_mut().zip(query) {
        *k = mu * *k + (1.0 - mu) * q;
    }
}
