use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    augment, compute_keys, encode, loss_and_gradient_with_keys, momentum_update, AugmentConfig,
    EncoderConfig, EncoderState,
};
use crate::cohort::TileRecord;
use crate::error::{Error, Result};
use crate::sampling::{epoch_schedule, BatchSpec, SamplerMode, TilePool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub sampler: SamplerMode,
    pub queue_size: usize,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.5,
            schedule: LrSchedule::Cosine,
            batch_size: 128,
            sampler: SamplerMode::Conditional(4),
            queue_size: 1024,
            seed: 0,
            encoder: EncoderConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn batch_spec(&self) -> Result<BatchSpec> {
        BatchSpec::new(self.batch_size, self.sampler)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.batch_spec()?;
        self.encoder.validate()?;
        self.augment.validate()
    }

    fn rate_at(&self, progress: f64) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: EncoderState,
    /// Mean batch loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

/// Trains the encoder on the given tiles with SGD and a cosine learning-rate
/// schedule. Deterministic for a fixed seed.
pub fn train(tiles: &[TileRecord], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let first = tiles
        .first()
        .ok_or_else(|| Error::Insufficient("cannot train on an empty cohort".into()))?;
    let dim = first.features.len();
    let spec = config.batch_spec()?;
    let pool = TilePool::new(tiles);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = EncoderState::new(dim, &config.encoder, config.queue_size, &mut rng)?;
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut step_losses = Vec::new();
    let mut strikes = 0;

    for epoch in 0..config.epochs {
        let schedule = epoch_schedule(&pool, &spec, &mut rng)?;
        let n_batches = schedule.len();
        let mut epoch_loss = 0.0;
        for (b, batch) in schedule.iter().enumerate() {
            let (query_views, key_views): (Vec<_>, Vec<_>) = batch
                .positions
                .iter()
                .map(|&p| {
                    let x = &tiles[p].features;
                    (augment(x, &config.augment, &mut rng), augment(x, &config.augment, &mut rng))
                })
                .unzip();
            let keys = compute_keys(&state.key, &key_views)?;
            let (loss, grad) =
                loss_and_gradient_with_keys(&state.query, &query_views, &keys, &state.queue, state.temperature)?;
            let lr = config.rate_at((epoch as f64 + b as f64 / n_batches as f64) / config.epochs as f64);
            for (p, g) in state.query.params.iter_mut().zip(&grad) {
                *p -= lr * g;
            }
            momentum_update(&mut state.key.params, &state.query.params, state.momentum);
            state.queue.push_batch(&keys);
            step_losses.push(loss);
            epoch_loss += loss;
        }
        let epoch_loss = epoch_loss / n_batches.max(1) as f64;
        loss_trace.push(epoch_loss);
        state.epoch = epoch + 1;
        log::debug!("epoch {} loss {epoch_loss:.5}", epoch + 1);

        if epoch > 0 && epoch_loss > 10.0 * loss_trace[0] {
            strikes += 1;
            if strikes >= 3 {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    trace: loss_trace,
                });
            }
        } else {
            strikes = 0;
        }
    }
    Ok(TrainOutcome {
        state,
        loss_trace,
        step_losses,
    })
}

/// Unit-norm embeddings for every tile, in input order.
pub fn embed_tiles(net: &crate::nn::Mlp, tiles: &[TileRecord]) -> Result<Vec<Vec<f64>>> {
    tiles.par_iter().map(|t| encode(net, &t.features)).collect()
}
