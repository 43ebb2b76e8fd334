//! Linear probe for slide identity: how much of a tile's slide can be read
//! off its frozen embedding.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::SlideId;
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::stats::{argmax, log_sum_exp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub n_slides: usize,
    pub n_test: usize,
    pub chance: f64,
}

const PROBE_ITERS: usize = 300;
const PROBE_LR: f64 = 0.05;
const PROBE_L2: f64 = 1e-3;

/// Trains a multinomial logistic regression to predict slide id from
/// standardized embeddings on half of each slide's tiles and reports accuracy
/// on the other half. Slides with a single tile are skipped.
pub fn slide_probe(embeddings: &[Vec<f64>], slide_ids: &[SlideId], seed: u64) -> Result<ProbeResult> {
    if embeddings.len() != slide_ids.len() {
        return Err(Error::Dimension {
            expected: embeddings.len(),
            found: slide_ids.len(),
        });
    }
    let mut groups: BTreeMap<SlideId, Vec<usize>> = BTreeMap::new();
    for (i, &s) in slide_ids.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let before = groups.len();
    groups.retain(|_, v| v.len() >= 2);
    if groups.len() < before {
        log::warn!("slide probe: {} single-tile slides excluded", before - groups.len());
    }
    if groups.len() < 2 {
        return Err(Error::Insufficient("slide probe needs at least 2 slides with 2 tiles".into()));
    }
    let dim = embeddings[0].len();
    let n_classes = groups.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, (_, mut idx)) in groups.into_iter().enumerate() {
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        train.extend(idx[..half].iter().map(|&i| (i, class)));
        test.extend(idx[half..].iter().map(|&i| (i, class)));
    }

    // Standardize with training statistics.
    let mut mu = vec![0.0; dim];
    let mut sd = vec![0.0; dim];
    for &(i, _) in &train {
        for (m, x) in mu.iter_mut().zip(&embeddings[i]) {
            *m += x / train.len() as f64;
        }
    }
    for &(i, _) in &train {
        for j in 0..dim {
            sd[j] += (embeddings[i][j] - mu[j]).powi(2) / train.len() as f64;
        }
    }
    sd.iter_mut().for_each(|s| *s = s.sqrt() + 1e-8);
    let standardize = |i: usize| -> Vec<f64> {
        embeddings[i].iter().zip(&mu).zip(&sd).map(|((x, m), s)| (x - m) / s).collect()
    };
    let x_train: Vec<(Vec<f64>, usize)> = train.iter().map(|&(i, c)| (standardize(i), c)).collect();

    // Parameters: weights (n_classes x dim) then biases.
    let n_w = n_classes * dim;
    let mut params = vec![0.0; n_w + n_classes];
    let mut opt = Adam::new(params.len(), PROBE_LR);
    let logits = |params: &[f64], x: &[f64]| -> Vec<f64> {
        (0..n_classes)
            .map(|c| params[n_w + c] + crate::nn::dot(&params[c * dim..(c + 1) * dim], x))
            .collect()
    };
    for _ in 0..PROBE_ITERS {
        let mut grad = vec![0.0; params.len()];
        for (x, c) in &x_train {
            let z = logits(&params, x);
            let lse = log_sum_exp(&z);
            for k in 0..n_classes {
                let g = ((z[k] - lse).exp() - f64::from(u8::from(k == *c))) / x_train.len() as f64;
                for (gw, xv) in grad[k * dim..(k + 1) * dim].iter_mut().zip(x) {
                    *gw += g * xv;
                }
                grad[n_w + k] += g;
            }
        }
        for (g, p) in grad[..n_w].iter_mut().zip(&params[..n_w]) {
            *g += PROBE_L2 * p;
        }
        opt.step(&mut params, &grad);
    }

    let correct = test
        .iter()
        .filter(|&&(i, c)| argmax(&logits(&params, &standardize(i))) == c)
        .count();
    Ok(ProbeResult {
        accuracy: correct as f64 / test.len() as f64,
        n_slides: n_classes,
        n_test: test.len(),
        chance: 1.0 / n_classes as f64,
    })
}
