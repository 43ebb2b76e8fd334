use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cox::{breslow_from_eta, StepFunction};
use super::net::{discrete_risk, init_network, survival_from_conditional, Head, NetConfig};
use super::{require_event, SurvivalRecord};
use crate::error::{Error, Result};
use crate::nn::{dot, Adam, Cache, Mlp};
use crate::stats::log_sum_exp;

/// Attention pooling: `z = sum_i a_i h_i` with `a = softmax(s)` and
/// `s_i = scorer(h_i)`. Returns `(z, a)`.
pub fn mil_attention_pool(tiles: &[&[f64]], scorer: &Mlp) -> Result<(Vec<f64>, Vec<f64>)> {
    let (z, a, _) = pool_cached(tiles, scorer)?;
    Ok((z, a))
}

fn pool_cached(tiles: &[&[f64]], scorer: &Mlp) -> Result<(Vec<f64>, Vec<f64>, Vec<Cache>)> {
    if tiles.is_empty() {
        return Err(Error::Insufficient("attention pooling over an empty bag".into()));
    }
    let d = scorer.input;
    let mut scores = Vec::with_capacity(tiles.len());
    let mut caches = Vec::with_capacity(tiles.len());
    for h in tiles {
        if h.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: h.len(),
            });
        }
        let (s, c) = scorer.forward_cached(h);
        scores.push(s[0]);
        caches.push(c);
    }
    let lse = log_sum_exp(&scores);
    let weights: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
    let mut z = vec![0.0; d];
    for (h, a) in tiles.iter().zip(&weights) {
        for (zj, hj) in z.iter_mut().zip(h.iter()) {
            *zj += a * hj;
        }
    }
    Ok((z, weights, caches))
}

/// Attention-MIL survival model: a scorer pools each bag of tile embeddings
/// and a head network maps the pooled vector to a Cox log-risk or to
/// discrete-time conditional survival logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilModel {
    pub scorer: Mlp,
    pub head_net: Mlp,
    pub head: Head,
    /// Breslow baseline for the Cox head.
    pub baseline: Option<StepFunction>,
    pub loss_trace: Vec<f64>,
}

impl MilModel {
    pub fn outputs(&self, bag: &[&[f64]]) -> Result<Vec<f64>> {
        let (z, _) = mil_attention_pool(bag, &self.scorer)?;
        Ok(self.head_net.forward(&z))
    }

    /// Higher is riskier: `exp(f)` for the Cox head, the negative expected
    /// number of intervals survived for the discrete head.
    pub fn risk(&self, bag: &[&[f64]]) -> Result<f64> {
        let out = self.outputs(bag)?;
        Ok(match &self.head {
            Head::Cox => out[0].exp(),
            Head::Discrete { .. } => discrete_risk(&conditional(&out)),
        })
    }

    /// Probability that the observed integer time exceeds `horizon`.
    pub fn survival_past(&self, bag: &[&[f64]], horizon: f64) -> Result<f64> {
        let out = self.outputs(bag)?;
        Ok(match &self.head {
            Head::Cox => {
                let base = self.baseline.as_ref().map_or(0.0, |b| b.eval(horizon));
                (-base * out[0].exp()).exp()
            }
            Head::Discrete { boundaries } => survival_from_conditional(boundaries, &conditional(&out), horizon + 1.0),
        })
    }
}

fn conditional(logits: &[f64]) -> Vec<f64> {
    logits.iter().map(|&a| 1.0 / (1.0 + (-a).exp())).collect()
}

/// Loss and gradients `(scorer, head)` over all bags.
pub(crate) fn mil_loss_and_gradient(
    scorer: &Mlp,
    head_net: &Mlp,
    bags: &[Vec<&[f64]>],
    records: &[SurvivalRecord],
    head: &Head,
    weight_decay: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    type Fwd = (Vec<f64>, Vec<f64>, Vec<Cache>, Vec<f64>, Cache);
    let forward: Vec<Fwd> = bags
        .par_iter()
        .map(|bag| {
            let (z, a, caches) = pool_cached(bag, scorer)?;
            let (out, hc) = head_net.forward_cached(&z);
            Ok((z, a, caches, out, hc))
        })
        .collect::<Result<_>>()?;
    let outputs: Vec<Vec<f64>> = forward.iter().map(|f| f.3.clone()).collect();
    let (mut loss, grad_out) = head.objective(records, &outputs);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = forward
        .par_iter()
        .zip(bags)
        .zip(&grad_out)
        .map(|(((z, a, caches, _, hc), bag), go)| {
            let mut gh = vec![0.0; head_net.params.len()];
            let mut gs = vec![0.0; scorer.params.len()];
            let gz = head_net.backward(z, hc, go, &mut gh);
            let gz_z = dot(&gz, z);
            for ((h, ai), c) in bag.iter().zip(a).zip(caches) {
                let g_score = ai * (dot(&gz, h) - gz_z);
                scorer.backward(h, c, &[g_score], &mut gs);
            }
            (gs, gh)
        })
        .collect();
    let mut g_scorer = vec![0.0; scorer.params.len()];
    let mut g_head = vec![0.0; head_net.params.len()];
    for (gs, gh) in partials {
        g_scorer.iter_mut().zip(gs).for_each(|(a, b)| *a += b);
        g_head.iter_mut().zip(gh).for_each(|(a, b)| *a += b);
    }
    for (net, grad) in [(scorer, &mut g_scorer), (head_net, &mut g_head)] {
        for ((g, w), m) in grad.iter_mut().zip(&net.params).zip(net.weight_mask()) {
            if m {
                *g += weight_decay * w;
                loss += 0.5 * weight_decay * w * w;
            }
        }
    }
    Ok((loss, g_scorer, g_head))
}

/// Trains scorer and head jointly with full-batch Adam. `records[i]` holds
/// the outcome of `bags[i]`; its covariates are ignored.
pub fn mil_fit(
    bags: &[Vec<&[f64]>],
    records: &[SurvivalRecord],
    head: Head,
    attention_dim: usize,
    cfg: &NetConfig,
) -> Result<MilModel> {
    cfg.validate()?;
    if bags.len() != records.len() {
        return Err(Error::Dimension {
            expected: records.len(),
            found: bags.len(),
        });
    }
    require_event(records)?;
    let d = bags
        .iter()
        .find_map(|b| b.first().map(|h| h.len()))
        .ok_or_else(|| Error::Insufficient("all MIL bags are empty".into()))?;
    if attention_dim == 0 {
        return Err(Error::Config("attention dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut scorer = Mlp::random(d, attention_dim, 1, &mut rng);
    let mut head_net = init_network(d, &head, cfg);
    let mut adam_s = Adam::new(scorer.params.len(), cfg.learning_rate);
    let mut adam_h = Adam::new(head_net.params.len(), cfg.learning_rate);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, gs, gh) = mil_loss_and_gradient(&scorer, &head_net, bags, records, &head, cfg.weight_decay)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("MIL loss at epoch {}", epoch + 1)));
        }
        loss_trace.push(loss);
        let lr = cfg.learning_rate_at(epoch);
        adam_s.lr = lr;
        adam_h.lr = lr;
        adam_s.step(&mut scorer.params, &gs);
        adam_h.step(&mut head_net.params, &gh);
    }
    let mut model = MilModel {
        scorer,
        head_net,
        head,
        baseline: None,
        loss_trace,
    };
    if model.head == Head::Cox {
        let eta: Vec<f64> = bags
            .iter()
            .map(|b| model.outputs(b).map(|o| o[0]))
            .collect::<Result<_>>()?;
        model.baseline = Some(breslow_from_eta(records, &eta));
    }
    Ok(model)
}
