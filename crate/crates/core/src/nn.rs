//! A one-hidden-layer tanh perceptron with hand-written backpropagation, and
//! an Adam optimizer over flat parameter vectors.
//!
//! Parameters live in a single `Vec<f64>` so that momentum averaging, finite
//! differences and optimizers can treat them uniformly. With `hidden == 0` the
//! network is the affine map `W x + b`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub params: Vec<f64>,
}

/// Hidden activations retained from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    pub hidden: Vec<f64>,
}

impl Mlp {
    pub fn n_params(input: usize, hidden: usize, output: usize) -> usize {
        if hidden == 0 {
            output * input + output
        } else {
            hidden * input + hidden + output * hidden + output
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            input,
            hidden,
            output,
            params: vec![0.0; Self::n_params(input, hidden, output)],
        }
    }

    /// Gaussian init with variance `1 / fan_in`; biases start at zero.
    pub fn random(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(input, hidden, output);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut [f64]| {
            let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
            for p in &mut params[range] {
                let g: f64 = StandardNormal.sample(rng);
                *p = g * scale;
            }
        };
        if hidden == 0 {
            fill(0..output * input, input, &mut net.params);
        } else {
            fill(0..hidden * input, input, &mut net.params);
            let w2 = hidden * input + hidden;
            fill(w2..w2 + output * hidden, hidden, &mut net.params);
        }
        net
    }

    /// Zeroes the last layer so the network starts as the constant 0.
    pub fn zero_output_layer(&mut self) {
        let start = self.output_weight_offset();
        self.params[start..].iter_mut().for_each(|p| *p = 0.0);
    }

    fn output_weight_offset(&self) -> usize {
        if self.hidden == 0 {
            0
        } else {
            self.hidden * self.input + self.hidden
        }
    }

    /// `true` for weights, `false` for biases. Used to exclude biases from
    /// weight decay.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.params.len()];
        let (i, h, o) = (self.input, self.hidden, self.output);
        if h == 0 {
            mask[o * i..].iter_mut().for_each(|m| *m = false);
        } else {
            mask[h * i..h * i + h].iter_mut().for_each(|m| *m = false);
            let b2 = h * i + h + o * h;
            mask[b2..].iter_mut().for_each(|m| *m = false);
        }
        mask
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, Cache) {
        debug_assert_eq!(x.len(), self.input);
        let (i, h, o) = (self.input, self.hidden, self.output);
        let p = &self.params;
        if h == 0 {
            let out = affine(&p[..o * i], &p[o * i..o * i + o], x);
            return (out, Cache { hidden: Vec::new() });
        }
        let mut hid = affine(&p[..h * i], &p[h * i..h * i + h], x);
        hid.iter_mut().for_each(|a| *a = a.tanh());
        let w2 = h * i + h;
        let out = affine(&p[w2..w2 + o * h], &p[w2 + o * h..w2 + o * h + o], &hid);
        (out, Cache { hidden: hid })
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`,
    /// and returns `d loss / d input`.
    pub fn backward(&self, x: &[f64], cache: &Cache, grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let p = &self.params;
        if h == 0 {
            let mut gx = vec![0.0; i];
            for r in 0..o {
                let g = grad_out[r];
                if g == 0.0 {
                    continue;
                }
                let row = &p[r * i..(r + 1) * i];
                let grow = &mut grads[r * i..(r + 1) * i];
                for c in 0..i {
                    grow[c] += g * x[c];
                    gx[c] += g * row[c];
                }
                grads[o * i + r] += g;
            }
            return gx;
        }
        let w2 = h * i + h;
        let b2 = w2 + o * h;
        let mut g_hid = vec![0.0; h];
        for r in 0..o {
            let g = grad_out[r];
            if g == 0.0 {
                continue;
            }
            let row = &p[w2 + r * h..w2 + (r + 1) * h];
            let grow = &mut grads[w2 + r * h..w2 + (r + 1) * h];
            for c in 0..h {
                grow[c] += g * cache.hidden[c];
                g_hid[c] += g * row[c];
            }
            grads[b2 + r] += g;
        }
        let mut gx = vec![0.0; i];
        for r in 0..h {
            let g = g_hid[r] * (1.0 - cache.hidden[r] * cache.hidden[r]);
            if g == 0.0 {
                continue;
            }
            let row = &p[r * i..(r + 1) * i];
            let grow = &mut grads[r * i..(r + 1) * i];
            for c in 0..i {
                grow[c] += g * x[c];
                gx[c] += g * row[c];
            }
            grads[h * i + r] += g;
        }
        gx
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| bias + dot(&w[r * cols..(r + 1) * cols], x))
        .collect()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Descent step: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}
