use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_records, require_event, SurvivalRecord};
use crate::error::{Error, Result};
use crate::nn::dot;

/// Right-continuous step function, zero before the first jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    pub alpha: f64,
    /// Breslow cumulative baseline hazard.
    pub baseline: StepFunction,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CoxFitOptions {
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for CoxFitOptions {
    fn default() -> Self {
        CoxFitOptions {
            max_iter: 100,
            tolerance: 1e-8,
        }
    }
}

/// Records grouped by distinct time, latest first, so that risk-set sums can
/// be accumulated in one pass.
struct RiskSets<'a> {
    records: &'a [SurvivalRecord],
    order: Vec<usize>,
    /// `(start, end)` ranges into `order`, one per distinct time.
    groups: Vec<(usize, usize)>,
}

impl<'a> RiskSets<'a> {
    fn new(records: &'a [SurvivalRecord]) -> Self {
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| records[b].time.cmp(&records[a].time));
        let mut groups = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let t = records[order[i]].time;
            let mut j = i;
            while j < order.len() && records[order[j]].time == t {
                j += 1;
            }
            groups.push((i, j));
            i = j;
        }
        RiskSets { records, order, groups }
    }

    fn linear_predictors(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let eta: Vec<f64> = self.records.iter().map(|r| dot(&r.v, beta)).collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (eta, shift)
    }

    fn log_likelihood(&self, beta: &[f64], alpha: f64) -> f64 {
        let (eta, shift) = self.linear_predictors(beta);
        let mut s0 = 0.0;
        let mut ll = 0.0;
        for &(a, b) in &self.groups {
            for &i in &self.order[a..b] {
                s0 += (eta[i] - shift).exp();
            }
            let log_s0 = s0.ln() + shift;
            for &i in &self.order[a..b] {
                if self.records[i].event {
                    ll += eta[i] - log_s0;
                }
            }
        }
        ll - 0.5 * alpha * dot(beta, beta)
    }

    /// Penalized log-likelihood, gradient and Hessian.
    fn derivatives(&self, beta: &[f64], alpha: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = beta.len();
        let (eta, shift) = self.linear_predictors(beta);
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(d);
        let mut s2 = DMatrix::<f64>::zeros(d, d);
        let mut ll = 0.0;
        let mut grad = DVector::<f64>::zeros(d);
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for &(a, b) in &self.groups {
            for &i in &self.order[a..b] {
                let w = (eta[i] - shift).exp();
                let x = DVector::from_column_slice(&self.records[i].v);
                s0 += w;
                s1.axpy(w, &x, 1.0);
                s2.ger(w, &x, &x, 1.0);
            }
            let events = self.order[a..b].iter().filter(|&&i| self.records[i].event).count();
            if events == 0 {
                continue;
            }
            let log_s0 = s0.ln() + shift;
            let mean = &s1 / s0;
            let cov = &s2 / s0 - &mean * mean.transpose();
            for &i in &self.order[a..b] {
                if self.records[i].event {
                    ll += eta[i] - log_s0;
                    grad += DVector::from_column_slice(&self.records[i].v) - &mean;
                }
            }
            hess -= cov * events as f64;
        }
        let b = DVector::from_column_slice(beta);
        ll -= 0.5 * alpha * b.dot(&b);
        grad -= alpha * &b;
        for j in 0..d {
            hess[(j, j)] -= alpha;
        }
        (ll, grad, hess)
    }
}

/// `sum_events [beta.v_i - ln sum_{t_j >= t_i} exp(beta.v_j)] - alpha/2 |beta|^2`
/// with Breslow handling of tied times.
pub fn penalized_partial_log_likelihood(records: &[SurvivalRecord], beta: &[f64], alpha: f64) -> f64 {
    RiskSets::new(records).log_likelihood(beta, alpha)
}

/// L2-penalized Cox regression fitted by Newton's method with step halving,
/// started from `beta = 0`.
pub fn cox_fit(records: &[SurvivalRecord], alpha: f64, options: CoxFitOptions) -> Result<CoxModel> {
    let d = check_records(records)?;
    require_event(records)?;
    if d == 0 {
        return Err(Error::Config("Cox regression needs at least one covariate".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("penalty weight must be finite and >= 0, got {alpha}")));
    }
    let sets = RiskSets::new(records);
    let mut beta = vec![0.0; d];
    let mut trace = Vec::new();
    for iteration in 0..options.max_iter {
        let (ll, grad, hess) = sets.derivatives(&beta, alpha);
        let gnorm = grad.norm();
        trace.push(gnorm);
        if gnorm < options.tolerance {
            let baseline = breslow_baseline(records, &beta)?;
            return Ok(CoxModel {
                beta,
                alpha,
                baseline,
                iterations: iteration,
                gradient_norm: gnorm,
                log_likelihood: ll,
            });
        }
        let direction = match (-hess).cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                log::warn!("Cox Hessian not negative definite at iteration {iteration}; taking a gradient step");
                grad.clone()
            }
        };
        let mut step = 1.0;
        loop {
            let candidate: Vec<f64> = beta.iter().zip(direction.iter()).map(|(b, d)| b + step * d).collect();
            let cand_ll = sets.log_likelihood(&candidate, alpha);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = candidate;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::NoConvergence {
                    iterations: iteration + 1,
                    detail: format!("step halving failed; gradient norms {trace:?}"),
                });
            }
        }
        if beta.iter().any(|b| !b.is_finite() || b.abs() > 1e8) {
            return Err(Error::NoConvergence {
                iterations: iteration + 1,
                detail: format!("coefficients diverging (separable data?); gradient norms {trace:?}"),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: options.max_iter,
        detail: format!("gradient norms {trace:?}"),
    })
}

/// `Lambda0(t) = sum_{event times t_e <= t} d_e / sum_{t_j >= t_e} exp(beta.v_j)`.
pub fn breslow_baseline(records: &[SurvivalRecord], beta: &[f64]) -> Result<StepFunction> {
    let d = check_records(records)?;
    require_event(records)?;
    if beta.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: beta.len(),
        });
    }
    let eta: Vec<f64> = records.iter().map(|r| dot(&r.v, beta)).collect();
    Ok(breslow_from_eta(records, &eta))
}

/// Breslow estimator for arbitrary log-risks `eta`.
pub(crate) fn breslow_from_eta(records: &[SurvivalRecord], eta: &[f64]) -> StepFunction {
    let sets = RiskSets::new(records);
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s0 = 0.0;
    let mut jumps = Vec::new();
    for &(a, b) in &sets.groups {
        for &i in &sets.order[a..b] {
            s0 += (eta[i] - shift).exp();
        }
        let events = sets.order[a..b].iter().filter(|&&i| records[i].event).count();
        if events > 0 {
            assert!(s0 > 0.0, "empty risk set at an event time");
            jumps.push((f64::from(records[sets.order[a]].time), events as f64 / s0 * (-shift).exp()));
        }
    }
    jumps.reverse();
    let mut cumulative = 0.0;
    let mut out = StepFunction {
        times: Vec::with_capacity(jumps.len()),
        values: Vec::with_capacity(jumps.len()),
    };
    for (t, j) in jumps {
        cumulative += j;
        out.times.push(t);
        out.values.push(cumulative);
    }
    out
}

/// `exp(beta.v)`.
pub fn cox_predict_risk(model: &CoxModel, v: &[f64]) -> f64 {
    dot(&model.beta, v).exp()
}

/// `exp(-Lambda0(t) exp(beta.v))`.
pub fn cox_predict_survival(model: &CoxModel, v: &[f64], t: f64) -> f64 {
    (-model.baseline.eval(t) * cox_predict_risk(model, v)).exp()
}

/// `(covariate index, exp(beta_i))`, sorted by ratio descending.
pub fn hazard_ratios(model: &CoxModel) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = model.beta.iter().map(|b| b.exp()).enumerate().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}
