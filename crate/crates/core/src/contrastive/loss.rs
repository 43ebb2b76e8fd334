use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{encode, EncoderState, KeyQueue};
use crate::error::{Error, Result};
use crate::nn::{dot, Cache, Mlp};
use crate::stats::log_sum_exp;

/// Queries per parallel backward chunk; fixed so the reduction order is too.
const GRAD_CHUNK: usize = 32;

/// `-ln( exp(q.k+/tau) / (exp(q.k+/tau) + sum exp(q.k-/tau)) )`, evaluated with
/// max-subtraction.
pub fn info_nce_loss(q: &[f64], k_pos: &[f64], negatives: &[Vec<f64>], tau: f64) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Undefined("InfoNCE needs at least one negative".into()));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(dot(q, k_pos) / tau);
    logits.extend(negatives.iter().map(|k| dot(q, k) / tau));
    Ok(log_sum_exp(&logits) - logits[0])
}

/// Two augmented views per tile: the query view goes through the query
/// encoder, the key view through the momentum encoder.
#[derive(Debug, Clone)]
pub struct BatchViews {
    pub query: Vec<Vec<f64>>,
    pub key: Vec<Vec<f64>>,
}

pub fn compute_keys(key_net: &Mlp, key_views: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    key_views.par_iter().map(|x| encode(key_net, x)).collect()
}

/// Mean InfoNCE over the batch and its gradient with respect to the query
/// encoder parameters. Keys are constants.
pub fn loss_and_gradient(state: &EncoderState, views: &BatchViews) -> Result<(f64, Vec<f64>)> {
    let keys = compute_keys(&state.key, &views.key)?;
    loss_and_gradient_with_keys(&state.query, &views.query, &keys, &state.queue, state.temperature)
}

/// Negatives for query `i` are the other batch keys followed by the queue.
pub fn loss_and_gradient_with_keys(
    query: &Mlp,
    query_views: &[Vec<f64>],
    keys: &[Vec<f64>],
    queue: &KeyQueue,
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    let m = query_views.len();
    if m != keys.len() {
        return Err(Error::Dimension {
            expected: m,
            found: keys.len(),
        });
    }
    if m < 2 && queue.is_empty() {
        return Err(Error::Undefined("InfoNCE needs at least one negative".into()));
    }
    for x in query_views {
        if x.len() != query.input {
            return Err(Error::Dimension {
                expected: query.input,
                found: x.len(),
            });
        }
    }
    let forward: Vec<(Vec<f64>, Cache)> = query_views.par_iter().map(|x| query.forward_cached(x)).collect();
    let e = query.output;
    let mut norms = Vec::with_capacity(m);
    let mut q = DMatrix::<f64>::zeros(m, e);
    for (i, (u, _)) in forward.iter().enumerate() {
        let norm = dot(u, u).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonFinite(format!("query norm {norm}")));
        }
        norms.push(norm);
        for (j, v) in u.iter().enumerate() {
            q[(i, j)] = v / norm;
        }
    }
    // Candidate rows: the batch keys (row i is query i's positive, the rest
    // are its negatives) followed by the queue.
    let n_cand = m + queue.len();
    let mut cand = DMatrix::<f64>::zeros(n_cand, e);
    for (r, k) in keys.iter().chain(queue.iter()).enumerate() {
        if k.len() != e {
            return Err(Error::Dimension {
                expected: e,
                found: k.len(),
            });
        }
        for (j, v) in k.iter().enumerate() {
            cand[(r, j)] = *v;
        }
    }
    let mut logits = &q * cand.transpose();
    logits /= tau;
    let mut total = 0.0;
    let mut row = vec![0.0; n_cand];
    for i in 0..m {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = logits[(i, c)];
        }
        let lse = log_sum_exp(&row);
        total += lse - row[i];
        for c in 0..n_cand {
            logits[(i, c)] = (row[c] - lse).exp();
        }
    }
    // dL/dq_i = (sum_c p_ic k_c - k_i) / (tau m)
    let mut gq = &logits * &cand;
    for i in 0..m {
        for j in 0..e {
            gq[(i, j)] = (gq[(i, j)] - cand[(i, j)]) / (tau * m as f64);
        }
    }
    let rows: Vec<usize> = (0..m).collect();
    let partials: Vec<Vec<f64>> = rows
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = vec![0.0; query.params.len()];
            for &i in chunk {
                // Through q = u / |u|.
                let g: Vec<f64> = (0..e).map(|j| gq[(i, j)]).collect();
                let qi: Vec<f64> = (0..e).map(|j| q[(i, j)]).collect();
                let qg = dot(&qi, &g);
                let gu: Vec<f64> = g.iter().zip(&qi).map(|(g, qv)| (g - qv * qg) / norms[i]).collect();
                query.backward(&query_views[i], &forward[i].1, &gu, &mut grads);
            }
            grads
        })
        .collect();
    let mut grad = vec![0.0; query.params.len()];
    for p in partials {
        for (a, b) in grad.iter_mut().zip(&p) {
            *a += b;
        }
    }
    let loss = total / m as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("contrastive loss {loss}")));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::{EncoderConfig, EncoderState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    /// Softmax cross-entropy written out directly, without max-subtraction.
    fn naive_cross_entropy(q: &[f64], pos: &[f64], negs: &[Vec<f64>], tau: f64) -> f64 {
        let num = (dot(q, pos) / tau).exp();
        let den: f64 = num + negs.iter().map(|k| (dot(q, k) / tau).exp()).sum::<f64>();
        -(num / den).ln()
    }

    #[test]
    fn uniform_similarity_is_log_k_plus_one() {
        let q = vec![1.0, 0.0];
        let k = vec![0.0, 1.0];
        let loss = info_nce_loss(&q, &k, &[k.clone(), k.clone()], 0.07).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_separation_is_zero() {
        let q = vec![1.0, 0.0];
        let neg = vec![-1.0, 0.0];
        for k in [1usize, 8, 1024] {
            let loss = info_nce_loss(&q, &q, &vec![neg.clone(); k], 0.07).unwrap();
            assert!(loss < 1e-9 && loss >= 0.0);
        }
    }

    #[test]
    fn empty_negatives_rejected() {
        assert!(info_nce_loss(&[1.0], &[1.0], &[], 0.07).is_err());
    }

    #[test]
    fn matches_naive_softmax_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = unit(&mut rng, 16);
            let pos = unit(&mut rng, 16);
            let negs: Vec<Vec<f64>> = (0..8).map(|_| unit(&mut rng, 16)).collect();
            let a = info_nce_loss(&q, &pos, &negs, 0.07).unwrap();
            let b = naive_cross_entropy(&q, &pos, &negs, 0.07);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    fn batch(rng: &mut ChaCha8Rng, m: usize, d: usize) -> BatchViews {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..m).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
        };
        BatchViews {
            query: draw(rng),
            key: draw(rng),
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = EncoderConfig {
            hidden: 8,
            embed_dim: 5,
            temperature: 0.5,
            momentum: 0.9,
        };
        let mut state = EncoderState::new(6, &cfg, 4, &mut rng).unwrap();
        state.key = Mlp::random(6, 8, 5, &mut rng);
        let extra: Vec<Vec<f64>> = (0..3).map(|_| unit(&mut rng, 5)).collect();
        state.queue.push_batch(&extra);
        let views = batch(&mut rng, 8, 6);
        let (_, grad) = loss_and_gradient(&state, &views).unwrap();
        assert_eq!(grad.len(), state.query.params.len());
        let h = 1e-5;
        for k in 0..grad.len() {
            let mut a = state.clone();
            let mut b = state.clone();
            a.query.params[k] += h;
            b.query.params[k] -= h;
            let fd = (loss_and_gradient(&a, &views).unwrap().0 - loss_and_gradient(&b, &views).unwrap().0) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / (fd.abs().max(grad[k].abs()).max(1e-6));
            assert!(rel < 1e-4, "param {k}: analytic {} fd {fd}", grad[k]);
        }
    }

    #[test]
    fn small_step_decreases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = EncoderConfig {
            hidden: 8,
            embed_dim: 6,
            temperature: 0.2,
            momentum: 0.99,
        };
        let mut state = EncoderState::new(4, &cfg, 0, &mut rng).unwrap();
        let views = batch(&mut rng, 8, 4);
        let (before, grad) = loss_and_gradient(&state, &views).unwrap();
        for (p, g) in state.query.params.iter_mut().zip(&grad) {
            *p -= 1e-3 * g;
        }
        let (after, _) = loss_and_gradient(&state, &views).unwrap();
        assert!(after < before);
    }

    #[test]
    fn queue_receives_no_gradient() {
        // The gradient vector covers exactly the query parameters; keys and
        // queue entries are inputs, not parameters.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = EncoderConfig {
            hidden: 3,
            embed_dim: 4,
            temperature: 0.1,
            momentum: 0.9,
        };
        let mut state = EncoderState::new(2, &cfg, 5, &mut rng).unwrap();
        state.queue.push_batch(&[unit(&mut rng, 4), unit(&mut rng, 4)]);
        let views = batch(&mut rng, 4, 2);
        let key_before = state.key.clone();
        let queue_before = state.queue.clone();
        let (_, grad) = loss_and_gradient(&state, &views).unwrap();
        assert_eq!(grad.len(), Mlp::n_params(2, 3, 4));
        assert_eq!(state.key, key_before);
        assert_eq!(state.queue, queue_before);
    }
}
