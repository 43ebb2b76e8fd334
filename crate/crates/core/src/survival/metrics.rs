use rayon::prelude::*;

use super::km::km_fit_times;
use crate::error::{Error, Result};

/// Harrell's concordance index.
///
/// A pair is comparable when the earlier time (strictly) is an event; it is
/// concordant when the earlier subject has the higher risk, and risk ties
/// count one half. Runs in `O(n log n)` with exact integer counts.
pub fn c_index(times: &[f64], events: &[bool], risks: &[f64]) -> Result<f64> {
    let n = times.len();
    if events.len() != n || risks.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: if events.len() != n { events.len() } else { risks.len() },
        });
    }
    if risks.iter().any(|r| r.is_nan()) {
        return Err(Error::NonFinite("risk score is NaN".into()));
    }
    // Dense ranks of the risks for the Fenwick tree.
    let mut sorted: Vec<f64> = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rank = |r: f64| sorted.partition_point(|&s| s < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut tree = Fenwick::new(sorted.len());
    let (mut concordant, mut tied, mut comparable) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let mut j = i;
        while j < n && times[order[j]] == t {
            j += 1;
        }
        // Tree holds exactly the subjects with time > t.
        let later = tree.total();
        for &s in &order[i..j] {
            if events[s] {
                let r = rank(risks[s]);
                let below = tree.prefix(r);
                let equal = tree.prefix(r + 1) - below;
                concordant += below;
                tied += equal;
                comparable += later;
            }
        }
        for &s in &order[i..j] {
            tree.add(rank(risks[s]));
        }
        i = j;
    }
    if comparable == 0 {
        return Err(Error::Undefined("C-index undefined: no comparable pairs".into()));
    }
    Ok((2 * concordant + tied) as f64 / (2 * comparable) as f64)
}

struct Fenwick {
    tree: Vec<u64>,
    count: u64,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0; n + 1],
            count: 0,
        }
    }

    fn add(&mut self, idx: usize) {
        self.count += 1;
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `< idx`.
    fn prefix(&self, idx: usize) -> u64 {
        let mut i = idx;
        let mut acc = 0;
        while i > 0 {
            acc += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }

    fn total(&self) -> u64 {
        self.count
    }
}

/// Inverse-probability-of-censoring weighted Brier score at `horizon`.
///
/// `predicted` holds each subject's predicted probability of surviving past
/// `horizon`. Subjects with an event at or before the horizon contribute
/// `S^2 / G(T-)`, subjects still at risk past it contribute
/// `(1 - S)^2 / G(horizon)`, and subjects censored before it contribute 0.
/// `G` is the Kaplan-Meier estimate of the censoring distribution.
pub fn brier_score(times: &[f64], events: &[bool], predicted: &[f64], horizon: f64) -> Result<f64> {
    let n = times.len();
    if events.len() != n || predicted.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: if events.len() != n { events.len() } else { predicted.len() },
        });
    }
    let censored: Vec<bool> = events.iter().map(|e| !e).collect();
    let g = km_fit_times(times, &censored)?;
    let g_horizon = g.survival_at(horizon);
    let terms: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = predicted[i];
            if times[i] <= horizon && events[i] {
                let w = g.survival_before(times[i]);
                if w <= 0.0 {
                    return Err(Error::Undefined(format!(
                        "censoring survival is zero just before t = {}",
                        times[i]
                    )));
                }
                Ok(s * s / w)
            } else if times[i] > horizon {
                if g_horizon <= 0.0 {
                    return Err(Error::Undefined(format!("censoring survival is zero at t = {horizon}")));
                }
                Ok((1.0 - s) * (1.0 - s) / g_horizon)
            } else {
                Ok(0.0)
            }
        })
        .collect();
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total / n as f64)
}
