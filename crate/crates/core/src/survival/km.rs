use serde::{Deserialize, Serialize};

use super::SurvivalRecord;
use crate::error::{Error, Result};

/// Product-limit estimate, a right-continuous step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Distinct observed times, ascending.
    pub times: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// `S(t)` at each entry of `times`.
    pub survival: Vec<f64>,
}

impl KmCurve {
    /// `S(t)`: product over event times `<= t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// Left limit `S(t-)`: product over event times `< t`.
    pub fn survival_before(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s < t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }
}

pub fn km_fit(records: &[SurvivalRecord]) -> Result<KmCurve> {
    let times: Vec<f64> = records.iter().map(|r| f64::from(r.time)).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    km_fit_times(&times, &events)
}

pub fn km_fit_times(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    if times.is_empty() {
        return Err(Error::Insufficient("Kaplan-Meier needs at least one record".into()));
    }
    if times.len() != events.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            found: events.len(),
        });
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Config(format!("survival time {t} is negative or not finite")));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut curve = KmCurve {
        times: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        survival: Vec::new(),
    };
    let mut remaining = times.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut d = 0;
        let mut c = 0;
        while i < order.len() && times[order[i]] == t {
            if events[order[i]] {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / remaining as f64;
        }
        curve.times.push(t);
        curve.at_risk.push(remaining);
        curve.events.push(d);
        curve.survival.push(s);
        remaining -= d + c;
    }
    Ok(curve)
}
