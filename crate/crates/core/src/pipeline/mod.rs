//! Experiment orchestration: configuration, cross-validated runs of the
//! SSL-cluster-Cox method and its baselines, the sampler ablation, and report
//! emission.

mod config;
mod manifest;
mod plot;
mod projection;
mod report;
mod run;

pub use config::{default_arms, BaselineConfig, ClusteringConfig, EmbeddingPaths, ExperimentConfig, SurvivalConfig};
pub use manifest::{write_manifest, Manifest};
pub use projection::project_2d;
pub use report::{
    emit_report, Aggregate, ExperimentReport, FoldFailure, FoldMetrics, KmStratum, LossTrace, ProbeRow,
    ProjectionPoint, Selection, PLOT_FILES, REPORT_FILES,
};
pub use run::{
    derive_seed, patient_records, permute_outcomes, run_ablation, run_ablation_on, run_baselines, run_baselines_on, run_pipeline,
    run_pipeline_on, seed_for_fold, split_plans, StageSeeds, E2E_DEEPSURV, E2E_NNSURV, MIL_DEEPSURV, MIL_NNSURV, SSL_COX,
};
