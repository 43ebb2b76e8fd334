use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::stats::log_sum_exp;

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// Log-likelihood of the training data at initialization and after each
    /// EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub n_iter: usize,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// `ln pi_z + ln N(x; mu_z, diag(var_z))` for every component.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.prepare().log_joint(x)
    }

    /// Hard assignment: index of the most probable component.
    pub fn predict(&self, x: &[f64]) -> usize {
        crate::stats::argmax(&self.log_joint(x))
    }

    /// Caches per-component constants for repeated density evaluation.
    pub fn prepare(&self) -> PreparedGmm<'_> {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let consts = (0..self.k())
            .map(|z| {
                self.weights[z].ln() - 0.5 * self.variances[z].iter().map(|v| ln2pi + v.ln()).sum::<f64>()
            })
            .collect();
        let inv_var = self
            .variances
            .iter()
            .map(|v| v.iter().map(|x| 1.0 / x).collect())
            .collect();
        PreparedGmm {
            model: self,
            consts,
            inv_var,
        }
    }
}

pub struct PreparedGmm<'a> {
    model: &'a GmmModel,
    consts: Vec<f64>,
    inv_var: Vec<Vec<f64>>,
}

impl PreparedGmm<'_> {
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        (0..self.consts.len())
            .map(|z| {
                self.consts[z] - 0.5 * weighted_sq_dist(x, &self.model.means[z], &self.inv_var[z])
            })
            .collect()
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(self.model, x)?;
        Ok(softmax_log(&self.log_joint(x)))
    }
}

/// `sum_j w_j (x_j - m_j)^2` with four independent partial sums.
fn weighted_sq_dist(x: &[f64], m: &[f64], w: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, mc, wc) = (x.chunks_exact(4), m.chunks_exact(4), w.chunks_exact(4));
    let (xr, mr, wr) = (xc.remainder(), mc.remainder(), wc.remainder());
    for ((xs, ms), ws) in xc.zip(mc).zip(wc) {
        for l in 0..4 {
            let d = xs[l] - ms[l];
            acc[l] += d * d * ws[l];
        }
    }
    let mut tail = 0.0;
    for ((xj, mj), wj) in xr.iter().zip(mr).zip(wr) {
        let d = xj - mj;
        tail += d * d * wj;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_input(model: &GmmModel, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding passed to posterior".into()));
    }
    Ok(())
}

/// Normalizes log-weights into probabilities in the log domain.
pub fn softmax_log(logs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// Cluster posterior `p(z | x)`.
pub fn posterior(model: &GmmModel, x: &[f64]) -> Result<Vec<f64>> {
    model.prepare().posterior(x)
}

struct EStep {
    resp: Vec<Vec<f64>>,
    log_likelihood: f64,
    /// Sample whose mixture density is lowest.
    worst: usize,
}

fn e_step(model: &GmmModel, data: &[Vec<f64>]) -> EStep {
    let prepared = model.prepare();
    let rows: Vec<(Vec<f64>, f64)> = data
        .par_iter()
        .map(|x| {
            let lj = prepared.log_joint(x);
            let lse = log_sum_exp(&lj);
            (lj.iter().map(|l| (l - lse).exp()).collect(), lse)
        })
        .collect();
    let mut log_likelihood = 0.0;
    let mut worst = 0;
    let mut worst_ll = f64::INFINITY;
    let mut resp = Vec::with_capacity(rows.len());
    for (i, (r, l)) in rows.into_iter().enumerate() {
        log_likelihood += l;
        if l < worst_ll {
            worst_ll = l;
            worst = i;
        }
        resp.push(r);
    }
    EStep {
        resp,
        log_likelihood,
        worst,
    }
}

fn global_variance(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len() as f64;
    let d = data[0].len();
    let mut mean = vec![0.0; d];
    for x in data {
        for j in 0..d {
            mean[j] += x[j] / n;
        }
    }
    let mut var = vec![0.0; d];
    for x in data {
        for j in 0..d {
            var[j] += (x[j] - mean[j]).powi(2) / n;
        }
    }
    var.iter().map(|v| v.max(VARIANCE_FLOOR)).collect()
}

/// Weighted M-step. Components whose total responsibility vanishes are
/// re-seeded at the worst-explained sample with the global variance.
fn m_step(model: &mut GmmModel, data: &[Vec<f64>], resp: &[Vec<f64>], worst: usize, global_var: &[f64]) {
    let n = data.len() as f64;
    let d = data[0].len();
    let k = model.k();
    let mut nk = vec![0.0; k];
    let mut sums = vec![vec![0.0; d]; k];
    for (x, r) in data.iter().zip(resp) {
        for z in 0..k {
            let w = r[z];
            if w == 0.0 {
                continue;
            }
            nk[z] += w;
            for (s, v) in sums[z].iter_mut().zip(x) {
                *s += w * v;
            }
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&nk)
        .map(|(s, &c)| s.iter().map(|v| v / c).collect())
        .collect();
    let mut sq = vec![vec![0.0; d]; k];
    for (x, r) in data.iter().zip(resp) {
        for z in 0..k {
            let w = r[z];
            if w == 0.0 || nk[z] < 1e-10 {
                continue;
            }
            for ((s, v), m) in sq[z].iter_mut().zip(x).zip(&means[z]) {
                *s += w * (v - m) * (v - m);
            }
        }
    }
    for (z, mean) in means.into_iter().enumerate() {
        if nk[z] < 1e-10 {
            log::warn!("mixture component {z} collapsed; re-seeding with variance floor reset");
            model.weights[z] = 1.0 / n;
            model.means[z] = data[worst].clone();
            model.variances[z] = global_var.to_vec();
            continue;
        }
        model.weights[z] = nk[z] / n;
        model.variances[z] = sq[z].iter().map(|v| (v / nk[z]).max(VARIANCE_FLOOR)).collect();
        model.means[z] = mean;
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (xs, ys) in ac.zip(bc) {
        for l in 0..4 {
            let d = xs[l] - ys[l];
            acc[l] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Draws an index with probability proportional to `weights`.
fn d2_draw(weights: &[f64], total: f64, rng: &mut impl Rng) -> usize {
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Greedy k-means++ seeding (each center is the best of `2 + ln k` D^2
/// draws) followed by one hard-assignment M-step.
fn initialize(data: &[Vec<f64>], k: usize, rng: &mut impl Rng, global_var: &[f64]) -> GmmModel {
    let n = data.len();
    let trials = 2 + (k as f64).ln() as usize;
    let mut centers: Vec<&Vec<f64>> = vec![&data[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let c = d2_draw(&d2, total, rng);
            let next: Vec<f64> = data.iter().zip(&d2).map(|(x, &d)| d.min(sq_dist(x, &data[c]))).collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, c, next));
            }
        }
        let (_, c, next) = best.expect("at least one trial");
        centers.push(&data[c]);
        d2 = next;
    }
    let resp: Vec<Vec<f64>> = data
        .iter()
        .map(|x| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (z, c) in centers.iter().enumerate() {
                let dd = sq_dist(x, c);
                if dd < best_d {
                    best_d = dd;
                    best = z;
                }
            }
            let mut r = vec![0.0; k];
            r[best] = 1.0;
            r
        })
        .collect();
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: centers.iter().map(|c| (*c).clone()).collect(),
        variances: vec![global_var.to_vec(); k],
        log_likelihood_trace: Vec::new(),
        n_iter: 0,
    };
    // Empty hard clusters keep their seed center.
    let worst = 0;
    let counts: Vec<f64> = (0..k).map(|z| resp.iter().map(|r| r[z]).sum()).collect();
    m_step(&mut model, data, &resp, worst, global_var);
    for z in 0..k {
        if counts[z] == 0.0 {
            model.means[z] = centers[z].clone();
        }
    }
    model
}

/// Fits a `k`-component diagonal Gaussian mixture by EM.
///
/// Stops when the relative log-likelihood improvement drops below
/// `tolerance` (never, if `tolerance` is 0) or after `max_iter` iterations.
pub fn fit_gmm(data: &[Vec<f64>], k: usize, tolerance: f64, max_iter: usize, seed: u64) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::Config("mixture needs k >= 1".into()));
    }
    if data.len() < k {
        return Err(Error::Insufficient(format!("{} samples for k = {k}", data.len())));
    }
    let d = data[0].len();
    for x in data {
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding passed to fit_gmm".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global_var = global_variance(data);
    let mut model = initialize(data, k, &mut rng, &global_var);

    let mut step = e_step(&model, data);
    model.log_likelihood_trace.push(step.log_likelihood);
    for _ in 0..max_iter {
        m_step(&mut model, data, &step.resp, step.worst, &global_var);
        let prev = step.log_likelihood;
        step = e_step(&model, data);
        model.log_likelihood_trace.push(step.log_likelihood);
        model.n_iter += 1;
        if tolerance > 0.0 && (step.log_likelihood - prev) / prev.abs().max(f64::MIN_POSITIVE) < tolerance {
            break;
        }
    }
    Ok(model)
}

/// Text layout:
///
/// ```text
/// condssl-gmm 1
/// k <k>
/// dim <d>
/// weight <z> <pi_z>          (k lines)
/// mean <z> <mu_z0> ...       (k lines)
/// var <z> <var_z0> ...       (k lines)
/// ```
pub fn save_gmm(model: &GmmModel, path: &Path) -> Result<()> {
    let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    atomic_write(path, |w| {
        writeln!(w, "condssl-gmm 1")?;
        writeln!(w, "k {}", model.k())?;
        writeln!(w, "dim {}", model.dim())?;
        for (z, p) in model.weights.iter().enumerate() {
            writeln!(w, "weight {z} {p}")?;
        }
        for (z, m) in model.means.iter().enumerate() {
            writeln!(w, "mean {z} {}", join(m))?;
        }
        for (z, v) in model.variances.iter().enumerate() {
            writeln!(w, "var {z} {}", join(v))?;
        }
        Ok(())
    })
}

pub fn load_gmm(path: &Path) -> Result<GmmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut k = None;
    let mut dim = None;
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut variances = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let nums = |parts: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
            parts
                .map(|s| s.parse::<f64>().map_err(|_| err(n, format!("invalid number {s:?}"))))
                .collect()
        };
        match tag {
            "condssl-gmm" if n == 1 => {}
            "k" => k = Some(nums(parts)?.first().copied().unwrap_or(0.0) as usize),
            "dim" => dim = Some(nums(parts)?.first().copied().unwrap_or(0.0) as usize),
            "weight" | "mean" | "var" => {
                let mut v = nums(parts)?;
                if v.is_empty() {
                    return Err(err(n, format!("{tag} line without component index")));
                }
                let z = v.remove(0) as usize;
                let target = match tag {
                    "weight" => {
                        weights.push((z, v.first().copied().unwrap_or(f64::NAN)));
                        continue;
                    }
                    "mean" => &mut means,
                    _ => &mut variances,
                };
                if Some(v.len()) != dim {
                    return Err(err(n, format!("{tag} {z} has {} values, expected {dim:?}", v.len())));
                }
                target.push((z, v));
            }
            other => return Err(err(n, format!("unknown line tag {other:?}"))),
        }
    }
    let k = k.ok_or_else(|| err(0, "missing k".into()))?;
    if weights.len() != k || means.len() != k || variances.len() != k {
        return Err(err(0, format!("expected {k} weights, means and variances")));
    }
    weights.sort_by_key(|(z, _)| *z);
    means.sort_by_key(|(z, _)| *z);
    variances.sort_by_key(|(z, _)| *z);
    Ok(GmmModel {
        weights: weights.into_iter().map(|(_, w)| w).collect(),
        means: means.into_iter().map(|(_, m)| m).collect(),
        variances: variances.into_iter().map(|(_, v)| v).collect(),
        log_likelihood_trace: Vec::new(),
        n_iter: 0,
    })
}
