use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PatientId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fold: usize,
    pub train: BTreeSet<PatientId>,
    pub validation: BTreeSet<PatientId>,
    pub test: BTreeSet<PatientId>,
}

/// Patient-level splits for `n_folds` folds.
///
/// Patients are shuffled once; fold `f` takes its test block starting at
/// offset `f * n / n_folds` of the shuffled order (wrapping), its validation
/// block right after, and trains on the rest. With five folds and a 20% test
/// fraction the test blocks partition the cohort.
pub fn split_by_patient(
    patients: &[PatientId],
    fractions: SplitFractions,
    seed: u64,
    n_folds: usize,
) -> Result<Vec<SplitPlan>> {
    let SplitFractions {
        train,
        validation,
        test,
    } = fractions;
    if [train, validation, test].iter().any(|f| !(0.0..=1.0).contains(f))
        || (train + validation + test - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split fractions ({train}, {validation}, {test}) must be in [0,1] and sum to 1"
        )));
    }
    if n_folds == 0 {
        return Err(Error::Config("n_folds must be at least 1".into()));
    }
    let unique: BTreeSet<PatientId> = patients.iter().copied().collect();
    let n = unique.len();
    if n < n_folds {
        return Err(Error::Insufficient(format!(
            "{n} patients cannot be split into {n_folds} folds"
        )));
    }
    let mut order: Vec<PatientId> = unique.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_test = (test * n as f64).round() as usize;
    let n_val = ((validation * n as f64).round() as usize).min(n - n_test);

    Ok((0..n_folds)
        .map(|fold| {
            let start = fold * n / n_folds;
            let at = |i: usize| order[(start + i) % n];
            SplitPlan {
                fold,
                test: (0..n_test).map(at).collect(),
                validation: (n_test..n_test + n_val).map(at).collect(),
                train: (n_test + n_val..n).map(at).collect(),
            }
        })
        .collect())
}
