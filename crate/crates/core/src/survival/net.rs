use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cox::{breslow_from_eta, StepFunction};
use super::{check_records, require_event, SurvivalRecord};
use crate::error::{Error, Result};
use crate::nn::{Adam, Cache, Mlp};

/// Rows per parallel gradient chunk; fixed so reductions are reproducible.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Width of the tanh hidden layer; 0 gives a linear model.
    pub hidden: usize,
    pub epochs: usize,
    /// Initial Adam step size, decayed to 0 on a cosine schedule.
    pub learning_rate: f64,
    /// L2 weight on weights (not biases), `(w/2) |W|^2`.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: 16,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 0.1,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }

    pub(crate) fn learning_rate_at(&self, epoch: usize) -> f64 {
        let frac = epoch as f64 / self.epochs.max(1) as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Survival objective attached to a network's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    /// One output, the log-risk, under the Cox partial likelihood.
    Cox,
    /// One logit per interval; `sigmoid(logit_j)` is the probability of
    /// surviving interval `j` given survival to its start.
    Discrete { boundaries: Vec<f64> },
}

impl Head {
    pub fn outputs(&self) -> usize {
        match self {
            Head::Cox => 1,
            Head::Discrete { boundaries } => boundaries.len() - 1,
        }
    }

    pub(crate) fn objective(&self, records: &[SurvivalRecord], outputs: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        match self {
            Head::Cox => {
                let eta: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
                let (loss, g) = deepsurv_objective(records, &eta);
                (loss, g.into_iter().map(|x| vec![x]).collect())
            }
            Head::Discrete { boundaries } => discrete_objective(records, boundaries, outputs),
        }
    }
}

/// Negative Breslow partial log-likelihood of log-risks `eta`, and its
/// gradient with respect to `eta`.
pub fn deepsurv_objective(records: &[SurvivalRecord], eta: &[f64]) -> (f64, Vec<f64>) {
    let n = records.len();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| records[b].time.cmp(&records[a].time));
    // Latest-first pass: risk-set sums per distinct time.
    let mut groups: Vec<(usize, usize, f64, usize)> = Vec::new();
    let mut s0 = 0.0;
    let mut loss = 0.0;
    let mut i = 0;
    while i < n {
        let t = records[order[i]].time;
        let mut j = i;
        while j < n && records[order[j]].time == t {
            s0 += (eta[order[j]] - shift).exp();
            j += 1;
        }
        let d = order[i..j].iter().filter(|&&k| records[k].event).count();
        let log_s0 = s0.ln() + shift;
        for &k in &order[i..j] {
            if records[k].event {
                loss -= eta[k] - log_s0;
            }
        }
        groups.push((i, j, s0, d));
        i = j;
    }
    // Earliest-first pass: A(t) = sum_{event times <= t} d / S0.
    let mut grad = vec![0.0; n];
    let mut acc = 0.0;
    for &(a, b, s0, d) in groups.iter().rev() {
        acc += d as f64 / s0;
        for &k in &order[a..b] {
            grad[k] = (eta[k] - shift).exp() * acc - if records[k].event { 1.0 } else { 0.0 };
        }
    }
    (loss, grad)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Interval `j` with `boundaries[j] <= t < boundaries[j + 1]`, or `None`
/// past the last boundary.
fn interval_of(boundaries: &[f64], t: f64) -> Option<usize> {
    let idx = boundaries.partition_point(|&b| b <= t);
    if idx >= boundaries.len() {
        None
    } else {
        Some(idx.saturating_sub(1))
    }
}

/// Negative discrete-time censored log-likelihood of per-interval logits.
///
/// A subject whose time falls in interval `j` survived intervals `0..j`; an
/// event additionally fails in interval `j`. Times past the last boundary are
/// clamped: censored subjects survive every interval, events fail in the
/// last one.
pub fn discrete_objective(records: &[SurvivalRecord], boundaries: &[f64], logits: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let t_count = boundaries.len() - 1;
    let mut loss = 0.0;
    let mut clamped = 0;
    let grads = records
        .iter()
        .zip(logits)
        .map(|(r, a)| {
            let mut g = vec![0.0; t_count];
            let (survived, failed) = match (interval_of(boundaries, f64::from(r.time)), r.event) {
                (Some(j), true) => (j, Some(j)),
                (Some(j), false) => (j, None),
                (None, true) => {
                    clamped += 1;
                    (t_count - 1, Some(t_count - 1))
                }
                (None, false) => {
                    clamped += 1;
                    (t_count, None)
                }
            };
            for k in 0..survived {
                // -ln sigmoid(a) = softplus(-a)
                loss += softplus(-a[k]);
                g[k] -= 1.0 - sigmoid(a[k]);
            }
            if let Some(k) = failed {
                // -ln(1 - sigmoid(a)) = softplus(a)
                loss += softplus(a[k]);
                g[k] += sigmoid(a[k]);
            }
            g
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} survival times lie past the last interval boundary and were clamped");
    }
    (loss, grads)
}

/// Objective plus weight decay, and its gradient with respect to the
/// network parameters.
pub(crate) fn network_loss_and_gradient(
    net: &Mlp,
    inputs: &[&[f64]],
    records: &[SurvivalRecord],
    head: &Head,
    weight_decay: f64,
) -> (f64, Vec<f64>) {
    let forward: Vec<(Vec<f64>, Cache)> = inputs.par_iter().map(|x| net.forward_cached(x)).collect();
    let outputs: Vec<Vec<f64>> = forward.iter().map(|(o, _)| o.clone()).collect();
    let (mut loss, grad_out) = head.objective(records, &outputs);
    let partials: Vec<Vec<f64>> = (0..inputs.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|rows| {
            let mut g = vec![0.0; net.params.len()];
            for &i in rows {
                net.backward(inputs[i], &forward[i].1, &grad_out[i], &mut g);
            }
            g
        })
        .collect();
    let mut grad = vec![0.0; net.params.len()];
    for p in partials {
        for (a, b) in grad.iter_mut().zip(p) {
            *a += b;
        }
    }
    for ((g, w), m) in grad.iter_mut().zip(&net.params).zip(net.weight_mask()) {
        if m {
            *g += weight_decay * w;
            loss += 0.5 * weight_decay * w * w;
        }
    }
    (loss, grad)
}

/// Full-batch Adam training; returns the per-epoch loss trace.
fn train_network(
    net: &mut Mlp,
    inputs: &[&[f64]],
    records: &[SurvivalRecord],
    head: &Head,
    cfg: &NetConfig,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(net.params.len(), cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = network_loss_and_gradient(net, inputs, records, head, cfg.weight_decay);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("survival network loss at epoch {}", epoch + 1)));
        }
        trace.push(loss);
        adam.lr = cfg.learning_rate_at(epoch);
        adam.step(&mut net.params, &grad);
    }
    Ok(trace)
}

pub(crate) fn init_network(input: usize, head: &Head, cfg: &NetConfig) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::random(input, cfg.hidden, head.outputs(), &mut rng);
    net.zero_output_layer();
    net
}

/// Network Cox model `lambda(t|x) = lambda0(t) exp(f(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSurvModel {
    pub net: Mlp,
    pub baseline: StepFunction,
    pub loss_trace: Vec<f64>,
}

pub fn deepsurv_fit(records: &[SurvivalRecord], cfg: &NetConfig) -> Result<DeepSurvModel> {
    cfg.validate()?;
    let d = check_records(records)?;
    require_event(records)?;
    let head = Head::Cox;
    let mut net = init_network(d, &head, cfg);
    let inputs: Vec<&[f64]> = records.iter().map(|r| r.v.as_slice()).collect();
    let loss_trace = train_network(&mut net, &inputs, records, &head, cfg)?;
    let eta: Vec<f64> = inputs.par_iter().map(|x| net.forward(x)[0]).collect();
    let baseline = breslow_from_eta(records, &eta);
    Ok(DeepSurvModel {
        net,
        baseline,
        loss_trace,
    })
}

/// `exp(f(v))`.
pub fn deepsurv_predict_risk(model: &DeepSurvModel, v: &[f64]) -> f64 {
    model.net.forward(v)[0].exp()
}

pub fn deepsurv_predict_survival(model: &DeepSurvModel, v: &[f64], t: f64) -> f64 {
    (-model.baseline.eval(t) * deepsurv_predict_risk(model, v)).exp()
}

/// Discrete-time hazard network over intervals `[t_j, t_{j+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteHazardModel {
    pub boundaries: Vec<f64>,
    pub net: Mlp,
    pub loss_trace: Vec<f64>,
}

/// Boundaries `0, 1, ..., intervals` in time units.
pub fn unit_boundaries(intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|j| j as f64).collect()
}

pub fn nnsurv_fit(records: &[SurvivalRecord], boundaries: &[f64], cfg: &NetConfig) -> Result<DiscreteHazardModel> {
    cfg.validate()?;
    let d = check_records(records)?;
    require_event(records)?;
    if boundaries.len() < 2 {
        return Err(Error::Config("need at least one interval".into()));
    }
    if boundaries[0] < 0.0 || boundaries.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "interval boundaries must be non-negative and strictly increasing: {boundaries:?}"
        )));
    }
    let head = Head::Discrete {
        boundaries: boundaries.to_vec(),
    };
    let mut net = init_network(d, &head, cfg);
    let inputs: Vec<&[f64]> = records.iter().map(|r| r.v.as_slice()).collect();
    let loss_trace = train_network(&mut net, &inputs, records, &head, cfg)?;
    Ok(DiscreteHazardModel {
        boundaries: boundaries.to_vec(),
        net,
        loss_trace,
    })
}

/// Conditional survival probabilities `p(T >= t_{j+1} | T >= t_j, v)`.
pub fn nnsurv_conditional(model: &DiscreteHazardModel, v: &[f64]) -> Vec<f64> {
    model.net.forward(v).into_iter().map(sigmoid).collect()
}

/// `S(t)`: the product of the conditional outputs of every interval that
/// ends at or before `t`.
pub fn nnsurv_survival(model: &DiscreteHazardModel, v: &[f64], t: f64) -> f64 {
    survival_from_conditional(&model.boundaries, &nnsurv_conditional(model, v), t)
}

pub(crate) fn survival_from_conditional(boundaries: &[f64], conditional: &[f64], t: f64) -> f64 {
    let done = boundaries[1..].partition_point(|&b| b <= t);
    conditional[..done].iter().product()
}

impl DiscreteHazardModel {
    /// Negative expected number of intervals survived; higher is riskier.
    pub fn risk(&self, v: &[f64]) -> f64 {
        discrete_risk(&nnsurv_conditional(self, v))
    }

    /// Probability that the observed integer time exceeds `horizon`, i.e.
    /// survival through the interval starting at `horizon`.
    pub fn survival_past(&self, v: &[f64], horizon: f64) -> f64 {
        nnsurv_survival(self, v, horizon + 1.0)
    }
}

pub(crate) fn discrete_risk(conditional: &[f64]) -> f64 {
    let mut s = 1.0;
    let mut total = 0.0;
    for c in conditional {
        s *= c;
        total += s;
    }
    -total
}
