use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::projection::project_2d;
use super::report::{ExperimentReport, FoldFailure, FoldMetrics, KmStratum, LossTrace, ProbeRow, ProjectionPoint, Selection};
use crate::clustering::{fit_gmm, pool_slides, GmmModel};
use crate::cohort::{split_by_patient, Cohort, PatientId, SlideId, SplitPlan};
use crate::contrastive::{embed_tiles, slide_probe, train, TrainConfig};
use crate::error::{Error, Result};
use crate::sampling::SamplerMode;
use crate::survival::{
    brier_score, c_index, cox_fit, cox_predict_risk, cox_predict_survival, deepsurv_fit, deepsurv_predict_risk,
    deepsurv_predict_survival, hazard_ratios, km_fit_times, mil_fit, nnsurv_fit, penalized_partial_log_likelihood,
    unit_boundaries, CoxFitOptions, CoxModel, Head, NetConfig, SurvivalRecord,
};

pub const SSL_COX: &str = "SSL-Cox";
pub const MIL_DEEPSURV: &str = "MIL-DeepSurv";
pub const MIL_NNSURV: &str = "MIL-NNSurv";
pub const E2E_DEEPSURV: &str = "E2E-DeepSurv";
pub const E2E_NNSURV: &str = "E2E-NNSurv";

/// SplitMix64 finalizer over `base` and a stream index.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Seed streams of one fold.
const STREAM_SPLIT: u64 = 0;
const STREAM_SSL: u64 = 1;
const STREAM_GMM: u64 = 2;
const STREAM_PROBE: u64 = 3;
const STREAM_NET: u64 = 4;

fn fold_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, 1000 + fold as u64)
}

/// Seeds of the stochastic stages of one fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub ssl: u64,
    pub gmm: u64,
    pub probe: u64,
    /// Base seed of the baseline networks; each network adds its own offset.
    pub net: u64,
}

impl StageSeeds {
    pub fn for_fold(cfg: &ExperimentConfig, fold: usize) -> Self {
        let base = fold_seed(cfg.seed, fold);
        StageSeeds {
            ssl: derive_seed(base, STREAM_SSL),
            gmm: derive_seed(base, STREAM_GMM),
            probe: derive_seed(base, STREAM_PROBE),
            net: derive_seed(base, STREAM_NET),
        }
    }
}

/// Which method families a run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Methods {
    baselines: bool,
}

fn check_disjoint<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>, stage: &str) -> Result<()> {
    let count = a.intersection(b).count();
    if count > 0 {
        return Err(Error::Leakage {
            stage: stage.to_string(),
            count,
        });
    }
    Ok(())
}

fn tile_ids(c: &Cohort) -> BTreeSet<u64> {
    c.tiles.iter().map(|t| t.tile_id).collect()
}

struct FoldData {
    fold: usize,
    seeds: StageSeeds,
    train: Cohort,
    validation: Cohort,
    test: Cohort,
}

fn fold_data(cohort: &Cohort, plan: &SplitPlan, seeds: StageSeeds) -> Result<FoldData> {
    check_disjoint(&plan.train, &plan.test, "patient split (train/test)")?;
    check_disjoint(&plan.train, &plan.validation, "patient split (train/validation)")?;
    check_disjoint(&plan.validation, &plan.test, "patient split (validation/test)")?;
    let fd = FoldData {
        fold: plan.fold,
        seeds,
        train: cohort.subset(&plan.train),
        validation: cohort.subset(&plan.validation),
        test: cohort.subset(&plan.test),
    };
    let (tr, va, te) = (tile_ids(&fd.train), tile_ids(&fd.validation), tile_ids(&fd.test));
    check_disjoint(&tr, &te, "tile split (train/test)")?;
    check_disjoint(&tr, &va, "tile split (train/validation)")?;
    Ok(fd)
}

struct Embedded {
    train: Vec<Vec<f64>>,
    validation: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
    loss_trace: Vec<f64>,
    probe: f64,
}

fn ssl_stage(fd: &FoldData, cfg: &TrainConfig) -> Result<Embedded> {
    let cfg = TrainConfig {
        seed: fd.seeds.ssl,
        ..cfg.clone()
    };
    let outcome = train(&fd.train.tiles, &cfg)?;
    let net = &outcome.state.query;
    let test = embed_tiles(net, &fd.test.tiles)?;
    let slides: Vec<SlideId> = fd.test.tiles.iter().map(|t| t.slide_id).collect();
    let probe = slide_probe(&test, &slides, fd.seeds.probe)?.accuracy;
    Ok(Embedded {
        train: embed_tiles(net, &fd.train.tiles)?,
        validation: embed_tiles(net, &fd.validation.tiles)?,
        test,
        loss_trace: outcome.loss_trace,
        probe,
    })
}

/// One record per patient, covariates the mean of its slides' features,
/// ordered by patient id.
pub fn patient_records(cohort: &Cohort, slide_features: &BTreeMap<SlideId, Vec<f64>>) -> Result<Vec<SurvivalRecord>> {
    let outcomes = cohort.outcome_map();
    cohort
        .patient_slides()
        .into_iter()
        .map(|(p, slides)| {
            let mut v: Vec<f64> = Vec::new();
            for s in &slides {
                let f = slide_features
                    .get(s)
                    .ok_or_else(|| Error::Insufficient(format!("no features for slide {s}")))?;
                if v.is_empty() {
                    v = vec![0.0; f.len()];
                }
                for (a, b) in v.iter_mut().zip(f) {
                    *a += b / slides.len() as f64;
                }
            }
            let o = outcomes
                .get(&p)
                .ok_or_else(|| Error::Insufficient(format!("no outcome for patient {p}")))?;
            Ok(SurvivalRecord::new(p, v, o.event, o.time))
        })
        .collect()
}

fn gmm_records(gmm: &GmmModel, cohort: &Cohort, emb: &[Vec<f64>]) -> Result<Vec<SurvivalRecord>> {
    let slides: Vec<SlideId> = cohort.tiles.iter().map(|t| t.slide_id).collect();
    let feats: BTreeMap<SlideId, Vec<f64>> = pool_slides(gmm, emb, &slides)?
        .into_iter()
        .map(|f| (f.slide_id, f.v))
        .collect();
    patient_records(cohort, &feats)
}

/// Test-set predictions of one method.
struct Evaluation {
    patients: Vec<PatientId>,
    times: Vec<f64>,
    events: Vec<bool>,
    risks: Vec<f64>,
    c_index: f64,
    brier: Option<f64>,
}

fn evaluate(records: &[SurvivalRecord], risks: Vec<f64>, survival: &[f64], horizon: f64) -> Result<Evaluation> {
    let times: Vec<f64> = records.iter().map(|r| r.time as f64).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    let c = c_index(&times, &events, &risks)?;
    let brier = match brier_score(&times, &events, survival, horizon) {
        Ok(b) => Some(b),
        Err(e) => {
            log::warn!("Brier score undefined: {e}");
            None
        }
    };
    Ok(Evaluation {
        patients: records.iter().map(|r| r.unit_id).collect(),
        times,
        events,
        risks,
        c_index: c,
        brier,
    })
}

struct CoxOutcome {
    eval: Evaluation,
    selection: Selection,
    model: CoxModel,
}

fn validation_loss(records: &[SurvivalRecord], model: &CoxModel) -> Option<f64> {
    if !records.iter().any(|r| r.event) {
        return None;
    }
    let l = -penalized_partial_log_likelihood(records, &model.beta, 0.0) / records.len() as f64;
    l.is_finite().then_some(l)
}

fn cox_stage(cfg: &ExperimentConfig, fd: &FoldData, emb: &Embedded, method: &str) -> Result<CoxOutcome> {
    let cc = &cfg.clustering;
    let sc = &cfg.survival;
    let gmm_seed = fd.seeds.gmm;
    let fit = |k: usize| fit_gmm(&emb.train, k, cc.tolerance, cc.max_iter, gmm_seed);

    let mut best: Option<(f64, usize, f64)> = None;
    let mut fitted: BTreeMap<usize, GmmModel> = BTreeMap::new();
    for &k in &cc.k_grid {
        let t = Instant::now();
        let gmm = match fit(k) {
            Ok(g) => {
                log::debug!("fold {}: GMM k={k} {} iterations, {:.1}s", fd.fold, g.n_iter, t.elapsed().as_secs_f64());
                g
            }
            Err(e) => {
                log::warn!("fold {}: GMM k={k} failed: {e}", fd.fold);
                continue;
            }
        };
        let train_recs = gmm_records(&gmm, &fd.train, &emb.train)?;
        let val_recs = gmm_records(&gmm, &fd.validation, &emb.validation)?;
        for &alpha in &sc.alpha_grid {
            let Ok(model) = cox_fit(&train_recs, alpha, CoxFitOptions::default()) else {
                continue;
            };
            if let Some(l) = validation_loss(&val_recs, &model) {
                if best.is_none_or(|(b, _, _)| l < b) {
                    best = Some((l, k, alpha));
                }
            }
        }
        fitted.insert(k, gmm);
    }
    let (validation_loss, k, alpha) = match best {
        Some((l, k, a)) => (Some(l), k, a),
        None => {
            log::warn!("fold {}: validation cannot rank (k, alpha); using defaults", fd.fold);
            (None, cc.k_default, sc.alpha_default)
        }
    };
    let gmm = match fitted.remove(&k) {
        Some(g) => g,
        None => fit(k)?,
    };
    let train_recs = gmm_records(&gmm, &fd.train, &emb.train)?;
    let train_patients: BTreeSet<PatientId> = train_recs.iter().map(|r| r.unit_id).collect();
    let test_patients: BTreeSet<PatientId> = fd.test.patient_ids().into_iter().collect();
    check_disjoint(&train_patients, &test_patients, "Cox fit")?;
    let model = cox_fit(&train_recs, alpha, CoxFitOptions::default())?;
    let test_recs = gmm_records(&gmm, &fd.test, &emb.test)?;
    let risks: Vec<f64> = test_recs.iter().map(|r| cox_predict_risk(&model, &r.v)).collect();
    let surv: Vec<f64> = test_recs.iter().map(|r| cox_predict_survival(&model, &r.v, sc.horizon)).collect();
    Ok(CoxOutcome {
        eval: evaluate(&test_recs, risks, &surv, sc.horizon)?,
        selection: Selection {
            method: method.to_string(),
            fold: fd.fold,
            k,
            alpha,
            validation_loss,
        },
        model,
    })
}

fn net_config(cfg: &ExperimentConfig, fd: &FoldData, stream: u64) -> NetConfig {
    NetConfig {
        seed: derive_seed(fd.seeds.net, stream),
        ..cfg.baselines.net.clone()
    }
}

/// Discrete-time intervals covering every training follow-up time.
fn boundaries_for(records: &[SurvivalRecord]) -> Vec<f64> {
    let max_t = records.iter().map(|r| r.time).max().unwrap_or(0);
    unit_boundaries(max_t as usize + 1)
}

fn patient_outcome_records(cohort: &Cohort) -> Vec<SurvivalRecord> {
    let mut recs: Vec<SurvivalRecord> = cohort
        .outcomes
        .iter()
        .map(|o| SurvivalRecord::new(o.patient_id, Vec::new(), o.event, o.time))
        .collect();
    recs.sort_by_key(|r| r.unit_id);
    recs
}

/// Risk and survival past the horizon for one tile.
type TilePredictor = dyn Fn(&[f64]) -> (f64, f64) + Sync;

/// Tile-level networks on raw features with patient outcomes broadcast to
/// tiles; predictions are averaged over each slide, then over a patient's
/// slides.
fn e2e_stage(cfg: &ExperimentConfig, fd: &FoldData, discrete: bool) -> Result<(Evaluation, Vec<f64>)> {
    let outcomes = fd.train.outcome_map();
    let tile_recs: Vec<SurvivalRecord> = fd
        .train
        .tiles
        .iter()
        .map(|t| {
            let o = outcomes[&t.patient_id];
            SurvivalRecord::new(t.tile_id, t.features.clone(), o.event, o.time)
        })
        .collect();
    let h = cfg.survival.horizon;
    let (predict, trace): (Box<TilePredictor>, Vec<f64>) = if discrete {
        let model = nnsurv_fit(&tile_recs, &boundaries_for(&tile_recs), &net_config(cfg, fd, 1))?;
        let trace = model.loss_trace.clone();
        (Box::new(move |x| (model.risk(x), model.survival_past(x, h))), trace)
    } else {
        let model = deepsurv_fit(&tile_recs, &net_config(cfg, fd, 0))?;
        let trace = model.loss_trace.clone();
        (
            Box::new(move |x| (deepsurv_predict_risk(&model, x), deepsurv_predict_survival(&model, x, h))),
            trace,
        )
    };
    let mut per_slide: BTreeMap<SlideId, (f64, f64, usize)> = BTreeMap::new();
    let preds: Vec<(f64, f64)> = fd.test.tiles.par_iter().map(|t| predict(&t.features)).collect();
    for (t, (r, s)) in fd.test.tiles.iter().zip(preds) {
        let e = per_slide.entry(t.slide_id).or_insert((0.0, 0.0, 0));
        e.0 += r;
        e.1 += s;
        e.2 += 1;
    }
    let feats: BTreeMap<SlideId, Vec<f64>> = per_slide
        .into_iter()
        .map(|(s, (r, p, n))| (s, vec![r / n as f64, p / n as f64]))
        .collect();
    let recs = patient_records(&fd.test, &feats)?;
    let risks: Vec<f64> = recs.iter().map(|r| r.v[0]).collect();
    let surv: Vec<f64> = recs.iter().map(|r| r.v[1]).collect();
    Ok((evaluate(&recs, risks, &surv, h)?, trace))
}

fn bags<'a>(cohort: &Cohort, emb: &'a [Vec<f64>]) -> Vec<Vec<&'a [f64]>> {
    let mut by_patient: BTreeMap<PatientId, Vec<&[f64]>> = BTreeMap::new();
    for (t, e) in cohort.tiles.iter().zip(emb) {
        by_patient.entry(t.patient_id).or_default().push(e.as_slice());
    }
    let ids: BTreeSet<PatientId> = cohort.outcomes.iter().map(|o| o.patient_id).collect();
    ids.into_iter().map(|p| by_patient.remove(&p).unwrap_or_default()).collect()
}

/// Attention-pooled MIL over frozen SSL tile embeddings, one bag per patient.
fn mil_stage(cfg: &ExperimentConfig, fd: &FoldData, emb: &Embedded, discrete: bool) -> Result<(Evaluation, Vec<f64>)> {
    let train_recs = patient_outcome_records(&fd.train);
    let train_bags = bags(&fd.train, &emb.train);
    let head = if discrete {
        Head::Discrete {
            boundaries: boundaries_for(&train_recs),
        }
    } else {
        Head::Cox
    };
    let model = mil_fit(
        &train_bags,
        &train_recs,
        head,
        cfg.baselines.attention_dim,
        &net_config(cfg, fd, 2 + discrete as u64),
    )?;
    let test_recs = patient_outcome_records(&fd.test);
    let test_bags = bags(&fd.test, &emb.test);
    let h = cfg.survival.horizon;
    let risks = test_bags.iter().map(|b| model.risk(b)).collect::<Result<Vec<f64>>>()?;
    let surv = test_bags.iter().map(|b| model.survival_past(b, h)).collect::<Result<Vec<f64>>>()?;
    Ok((evaluate(&test_recs, risks, &surv, h)?, model.loss_trace))
}

/// Everything one fold contributes to the report.
#[derive(Default)]
struct FoldOutput {
    rows: Vec<FoldMetrics>,
    probes: Vec<ProbeRow>,
    traces: Vec<LossTrace>,
    selections: Vec<Selection>,
    failures: Vec<FoldFailure>,
    hazard_ratios: Option<Vec<(usize, f64)>>,
    /// SSL-Cox test predictions for risk stratification.
    strata: Option<Evaluation>,
    projection: Vec<ProjectionPoint>,
}

impl FoldOutput {
    fn record(&mut self, method: &str, fold: usize, eval: &Evaluation) {
        self.rows.push(FoldMetrics {
            method: method.to_string(),
            fold,
            c_index: eval.c_index,
            brier: eval.brier,
        });
    }

    fn fail(&mut self, method: &str, fold: usize, err: &Error) {
        log::warn!("fold {fold} {method} failed: {err}");
        self.failures.push(FoldFailure {
            method: method.to_string(),
            fold,
            error: err.to_string(),
        });
    }
}

fn run_fold(cfg: &ExperimentConfig, cohort: &Cohort, plan: &SplitPlan, label: &str, methods: Methods) -> FoldOutput {
    let mut out = FoldOutput::default();
    let fold = plan.fold;
    let fd = match fold_data(cohort, plan, StageSeeds::for_fold(cfg, fold)) {
        Ok(fd) => fd,
        Err(e) => {
            out.fail(label, fold, &e);
            return out;
        }
    };

    if methods.baselines {
        for (name, discrete) in [(E2E_DEEPSURV, false), (E2E_NNSURV, true)] {
            let t = Instant::now();
            let res = e2e_stage(cfg, &fd, discrete);
            log::debug!("fold {fold} {name}: {:.1}s", t.elapsed().as_secs_f64());
            match res {
                Ok((eval, trace)) => {
                    out.record(name, fold, &eval);
                    out.traces.push(LossTrace {
                        name: name.to_string(),
                        fold,
                        values: trace,
                    });
                }
                Err(e) => out.fail(name, fold, &e),
            }
        }
    }

    let t = Instant::now();
    let emb = ssl_stage(&fd, &cfg.train);
    log::debug!("fold {fold} {label} encoder: {:.1}s", t.elapsed().as_secs_f64());
    let emb = match emb {
        Ok(emb) => emb,
        Err(e) => {
            out.fail(label, fold, &e);
            if methods.baselines {
                out.fail(MIL_DEEPSURV, fold, &e);
                out.fail(MIL_NNSURV, fold, &e);
            }
            return out;
        }
    };
    out.probes.push(ProbeRow {
        method: label.to_string(),
        fold,
        accuracy: emb.probe,
    });
    out.traces.push(LossTrace {
        name: format!("{label} contrastive"),
        fold,
        values: emb.loss_trace.clone(),
    });
    if fold == 0 {
        match project_2d(&emb.test) {
            Ok(xy) => {
                out.projection = fd
                    .test
                    .tiles
                    .iter()
                    .zip(xy)
                    .map(|(t, (x, y))| ProjectionPoint {
                        slide_id: t.slide_id,
                        true_cluster: t.true_cluster,
                        x,
                        y,
                    })
                    .collect();
            }
            Err(e) => log::warn!("projection skipped: {e}"),
        }
    }

    let t = Instant::now();
    let cox = cox_stage(cfg, &fd, &emb, label);
    log::debug!("fold {fold} {label} clustering and Cox: {:.1}s", t.elapsed().as_secs_f64());
    match cox {
        Ok(c) => {
            out.record(label, fold, &c.eval);
            out.selections.push(c.selection);
            out.hazard_ratios = Some(hazard_ratios(&c.model));
            out.strata = Some(c.eval);
        }
        Err(e) => out.fail(label, fold, &e),
    }

    if methods.baselines {
        for (name, discrete) in [(MIL_DEEPSURV, false), (MIL_NNSURV, true)] {
            let t = Instant::now();
            let res = mil_stage(cfg, &fd, &emb, discrete);
            log::debug!("fold {fold} {name}: {:.1}s", t.elapsed().as_secs_f64());
            match res {
                Ok((eval, trace)) => {
                    out.record(name, fold, &eval);
                    out.traces.push(LossTrace {
                        name: name.to_string(),
                        fold,
                        values: trace,
                    });
                }
                Err(e) => out.fail(name, fold, &e),
            }
        }
    }
    out
}

/// Pools per-fold test predictions into high/low strata split at each
/// fold's median risk, ties broken by patient id, and fits one KM curve each.
fn km_strata(evals: &[&Evaluation]) -> Vec<KmStratum> {
    let mut high = (Vec::new(), Vec::new());
    let mut low = (Vec::new(), Vec::new());
    for e in evals {
        let mut order: Vec<usize> = (0..e.risks.len()).collect();
        order.sort_by(|&a, &b| e.risks[b].total_cmp(&e.risks[a]).then(e.patients[a].cmp(&e.patients[b])));
        let n_high = order.len() / 2;
        for (rank, &i) in order.iter().enumerate() {
            let s = if rank < n_high { &mut high } else { &mut low };
            s.0.push(e.times[i]);
            s.1.push(e.events[i]);
        }
    }
    [("high", high), ("low", low)]
        .into_iter()
        .filter_map(|(label, (t, ev))| {
            km_fit_times(&t, &ev).ok().map(|curve| KmStratum {
                label: label.to_string(),
                curve,
            })
        })
        .collect()
}

fn prepare(cfg: &ExperimentConfig, cohort: &Cohort) -> Result<(ExperimentReport, Vec<SplitPlan>)> {
    cfg.validate()?;
    cohort.validate()?;
    let plans = split_plans(cfg, cohort)?;
    let report = ExperimentReport {
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        fold_seeds: (0..cfg.folds).map(|f| fold_seed(cfg.seed, f)).collect(),
        ..Default::default()
    };
    Ok((report, plans))
}

/// The patient-level split plan a configuration produces for `cohort`.
pub fn split_plans(cfg: &ExperimentConfig, cohort: &Cohort) -> Result<Vec<SplitPlan>> {
    split_by_patient(&cohort.patient_ids(), cfg.split, derive_seed(cfg.seed, STREAM_SPLIT), cfg.folds)
}

/// Seed handed to the stages of `fold`.
pub fn seed_for_fold(cfg: &ExperimentConfig, fold: usize) -> u64 {
    fold_seed(cfg.seed, fold)
}

fn run(cfg: &ExperimentConfig, cohort: &Cohort, label: &str, methods: Methods) -> Result<ExperimentReport> {
    let (mut report, plans) = prepare(cfg, cohort)?;
    let outputs: Vec<FoldOutput> = plans.par_iter().map(|p| run_fold(cfg, cohort, p, label, methods)).collect();
    let mut strata = Vec::new();
    for o in &outputs {
        if report.hazard_ratios.is_empty() {
            if let Some(hr) = &o.hazard_ratios {
                report.hazard_ratios = hr.clone();
            }
        }
        if report.projection.is_empty() {
            report.projection = o.projection.clone();
        }
        if let Some(e) = &o.strata {
            strata.push(e);
        }
    }
    report.km_strata = km_strata(&strata);
    for o in outputs {
        report.rows.extend(o.rows);
        report.probes.extend(o.probes);
        report.loss_traces.extend(o.traces);
        report.selections.extend(o.selections);
        report.failures.extend(o.failures);
    }
    // Fold-major order from the parallel map; regroup by method.
    let order = |m: &str| -> usize {
        [E2E_DEEPSURV, E2E_NNSURV, MIL_DEEPSURV, MIL_NNSURV]
            .iter()
            .position(|x| *x == m)
            .map_or(0, |p| p + 1)
    };
    report.rows.sort_by_key(|r| (order(&r.method), r.fold));
    report.aggregate();
    Ok(report)
}

/// SSL encoder, GMM featurization and Cox regression on every fold.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    run_pipeline_on(cfg, &cfg.load_cohort()?)
}

pub fn run_pipeline_on(cfg: &ExperimentConfig, cohort: &Cohort) -> Result<ExperimentReport> {
    run(cfg, cohort, SSL_COX, Methods { baselines: false })
}

/// SSL-Cox plus the end-to-end and multiple-instance baselines.
pub fn run_baselines(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    run_baselines_on(cfg, &cfg.load_cohort()?)
}

pub fn run_baselines_on(cfg: &ExperimentConfig, cohort: &Cohort) -> Result<ExperimentReport> {
    run(cfg, cohort, SSL_COX, Methods { baselines: true })
}

/// One SSL-Cox run per sampler arm on shared folds and seeds; methods are
/// named by arm (`cond:4`, `random`, ...).
pub fn run_ablation(cfg: &ExperimentConfig, arms: &[SamplerMode]) -> Result<ExperimentReport> {
    cfg.validate()?;
    run_ablation_on(cfg, &cfg.load_cohort()?, arms)
}

pub fn run_ablation_on(cfg: &ExperimentConfig, cohort: &Cohort, arms: &[SamplerMode]) -> Result<ExperimentReport> {
    if arms.is_empty() {
        return Err(Error::Config("ablation needs at least one arm".into()));
    }
    let mut merged: Option<ExperimentReport> = None;
    for &arm in arms {
        let mut arm_cfg = cfg.clone();
        arm_cfg.train.sampler = arm;
        let report = run(&arm_cfg, cohort, &arm.to_string(), Methods { baselines: false })?;
        match merged.as_mut() {
            None => {
                let mut r = report;
                r.config_hash = cfg.hash()?;
                merged = Some(r);
            }
            Some(m) => m.extend(report),
        }
    }
    Ok(merged.expect("at least one arm"))
}

/// A copy of `cohort` whose patient outcomes are permuted across patients.
pub fn permute_outcomes(cohort: &Cohort, seed: u64) -> Cohort {
    let mut outcomes = cohort.outcomes.clone();
    let mut labels: Vec<(bool, u32)> = outcomes.iter().map(|o| (o.event, o.time)).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (o, (e, t)) in outcomes.iter_mut().zip(labels) {
        o.event = e;
        o.time = t;
    }
    Cohort {
        outcomes,
        ..cohort.clone()
    }
}
