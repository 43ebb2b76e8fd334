//! Survival estimators and metrics: Kaplan-Meier, penalized Cox regression
//! with a Breslow baseline, network hazards (DeepSurv, discrete-time
//! NN-Surv), attention-MIL pooling, concordance and IPCW Brier score.
//!
//! Times are non-negative integers in six-month units.

mod cox;
mod km;
mod metrics;
mod mil;
mod net;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cox::{
    breslow_baseline, cox_fit, cox_predict_risk, cox_predict_survival, hazard_ratios, penalized_partial_log_likelihood,
    CoxFitOptions, CoxModel, StepFunction,
};
pub use km::{km_fit, km_fit_times, KmCurve};
pub use metrics::{brier_score, c_index};
pub use mil::{mil_attention_pool, mil_fit, MilModel};
pub use net::{
    deepsurv_fit, deepsurv_objective, deepsurv_predict_risk, deepsurv_predict_survival, discrete_objective,
    nnsurv_conditional, nnsurv_fit, nnsurv_survival, unit_boundaries, DeepSurvModel, DiscreteHazardModel, Head, NetConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub unit_id: u64,
    pub v: Vec<f64>,
    pub event: bool,
    pub time: u32,
}

impl SurvivalRecord {
    pub fn new(unit_id: u64, v: Vec<f64>, event: bool, time: u32) -> Self {
        SurvivalRecord {
            unit_id,
            v,
            event,
            time,
        }
    }
}

/// Checks a common covariate dimension and finiteness; returns the dimension.
pub(crate) fn check_records(records: &[SurvivalRecord]) -> Result<usize> {
    let Some(first) = records.first() else {
        return Err(Error::Insufficient("no survival records".into()));
    };
    let d = first.v.len();
    for r in records {
        if r.v.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: r.v.len(),
            });
        }
        if r.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("covariates of unit {}", r.unit_id)));
        }
    }
    Ok(d)
}

pub(crate) fn require_event(records: &[SurvivalRecord]) -> Result<()> {
    if records.iter().any(|r| r.event) {
        Ok(())
    } else {
        Err(Error::Insufficient("no events among survival records".into()))
    }
}
