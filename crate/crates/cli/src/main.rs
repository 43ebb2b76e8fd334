use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use condssl::clustering::{fit_gmm, load_gmm, pool_slides, save_gmm, save_slide_features, GmmModel};
use condssl::cohort::{save_embeddings, save_outcomes, load_tiles, Cohort, SlideId, SplitPlan, TileRecord};
use condssl::contrastive::{embed_tiles, save_checkpoint, save_loss_trace, slide_probe, train, TrainConfig};
use condssl::fsutil::write_string;
use condssl::pipeline::{
    default_arms, emit_report, patient_records, run_ablation, run_baselines, run_pipeline, split_plans,
    write_manifest, EmbeddingPaths, ExperimentConfig, ExperimentReport, Manifest, StageSeeds, SSL_COX,
};
use condssl::sampling::SamplerMode;
use condssl::survival::{
    brier_score, c_index, cox_fit, cox_predict_risk, cox_predict_survival, hazard_ratios, CoxFitOptions, CoxModel,
    SurvivalRecord,
};

#[derive(Parser)]
#[command(name = "condssl", version, about = "Slide-conditional contrastive learning and survival analysis")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `random` or `cond:N`.
    #[arg(long)]
    sampler: Option<SamplerMode>,
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args, Clone, Debug)]
struct FoldArg {
    /// Fold whose split the stage uses.
    #[arg(long, default_value_t = 0)]
    fold: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort and write tiles.csv, outcomes.csv and a config pointing at them.
    Generate(Common),
    /// Train the contrastive encoder on one fold's training tiles and embed every tile.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fold: FoldArg,
    },
    /// Fit the mixture on training embeddings and write slide features.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fold: FoldArg,
        /// Number of components (default `clustering.k_default`).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Fit the Cox model on training patients' slide features.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fold: FoldArg,
        /// L2 weight (default `survival.alpha_default`).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Score the fitted stages on the fold's test patients.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fold: FoldArg,
    },
    /// Full cross-validated run: SSL-Cox and, unless disabled, the baselines.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_baselines: bool,
    },
    /// Sampler ablation over slides-per-batch arms.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated arms, e.g. `cond:1,cond:4,random`.
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<SamplerMode>>,
    },
    /// Re-emit CSVs and plots from a saved report.json.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report to read (default `<out>/report.json`).
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(m) = c.sampler {
        cfg.train.sampler = m;
    }
    if let Some(f) = c.folds {
        cfg.folds = f;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create output directory {}", cfg.output_dir.display()))?;
    Ok(cfg)
}

fn manifest(command: &str, cfg: &ExperimentConfig, dir: &Path, files: &[String], name: &str) -> Result<()> {
    let seeds = (0..cfg.folds).map(|f| condssl::pipeline::seed_for_fold(cfg, f)).collect();
    write_manifest(Manifest::new(command, cfg, seeds)?, dir, files, name)?;
    Ok(())
}

fn fold_context(cfg: &ExperimentConfig, fold: usize) -> Result<(Cohort, SplitPlan, PathBuf)> {
    if fold >= cfg.folds {
        bail!("fold {fold} out of range for {} folds", cfg.folds);
    }
    let cohort = cfg.load_cohort()?;
    let plan = split_plans(cfg, &cohort)?.swap_remove(fold);
    let dir = cfg.output_dir.join(format!("fold{fold}"));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok((cohort, plan, dir))
}

fn generate(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    if cfg.embeddings.is_some() {
        bail!("generate needs a synthetic cohort; the configuration points at embedding files");
    }
    let cohort = cfg.load_cohort()?;
    let out = &cfg.output_dir;
    save_embeddings(&cohort.tiles, cohort.dim, &out.join("tiles.csv"))?;
    save_outcomes(&cohort.outcomes, &out.join("outcomes.csv"))?;
    let mut next = cfg.clone();
    next.embeddings = Some(EmbeddingPaths {
        tiles: out.join("tiles.csv"),
        outcomes: out.join("outcomes.csv"),
    });
    write_string(&out.join("config.toml"), &next.to_toml()?)?;
    let files = ["tiles.csv", "outcomes.csv", "config.toml"].map(String::from);
    manifest("generate", &cfg, out, &files, "manifest.json")?;
    log::info!("{} tiles from {} patients written to {}", cohort.tiles.len(), cohort.outcomes.len(), out.display());
    Ok(())
}

fn train_stage(c: &Common, fold: usize) -> Result<()> {
    let cfg = load_config(c)?;
    let (cohort, plan, dir) = fold_context(&cfg, fold)?;
    let seeds = StageSeeds::for_fold(&cfg, fold);
    let tcfg = TrainConfig {
        seed: seeds.ssl,
        ..cfg.train.clone()
    };
    let train_set = cohort.subset(&plan.train);
    let outcome = train(&train_set.tiles, &tcfg)?;
    let net = &outcome.state.query;
    let emb = embed_tiles(net, &cohort.tiles)?;
    let records: Vec<TileRecord> = cohort
        .tiles
        .iter()
        .zip(&emb)
        .map(|(t, e)| TileRecord {
            features: e.clone(),
            ..t.clone()
        })
        .collect();
    let test = cohort.subset(&plan.test);
    let test_emb = embed_tiles(net, &test.tiles)?;
    let slides: Vec<SlideId> = test.tiles.iter().map(|t| t.slide_id).collect();
    let probe = slide_probe(&test_emb, &slides, seeds.probe)?;
    save_checkpoint(&outcome.state, &dir.join("checkpoint.txt"))?;
    save_loss_trace(&outcome.loss_trace, &dir.join("loss_trace.csv"))?;
    save_embeddings(&records, net.output, &dir.join("embeddings.csv"))?;
    write_string(&dir.join("probe.csv"), &format!("fold,accuracy,chance\n{fold},{},{}\n", probe.accuracy, probe.chance))?;
    let files = ["checkpoint.txt", "loss_trace.csv", "embeddings.csv", "probe.csv"].map(String::from);
    manifest("train", &cfg, &dir, &files, "manifest-train.json")?;
    log::info!(
        "fold {fold}: final loss {:.4}, slide probe {:.3} (chance {:.3})",
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        probe.accuracy,
        probe.chance
    );
    Ok(())
}

/// Tile embeddings written by `train`, in the cohort's tile order.
fn load_stage_embeddings(dir: &Path, cohort: &Cohort) -> Result<Vec<Vec<f64>>> {
    let path = dir.join("embeddings.csv");
    let (_, tiles) = load_tiles(&path).with_context(|| format!("run `train` first; cannot read {}", path.display()))?;
    let mut by_id: HashMap<u64, Vec<f64>> = tiles.into_iter().map(|t| (t.tile_id, t.features)).collect();
    cohort
        .tiles
        .iter()
        .map(|t| {
            by_id
                .remove(&t.tile_id)
                .with_context(|| format!("{} has no embedding for tile {}", path.display(), t.tile_id))
        })
        .collect()
}

fn subset_embeddings(cohort: &Cohort, emb: &[Vec<f64>], part: &Cohort) -> Vec<Vec<f64>> {
    let index: HashMap<u64, usize> = cohort.tiles.iter().enumerate().map(|(i, t)| (t.tile_id, i)).collect();
    part.tiles.iter().map(|t| emb[index[&t.tile_id]].clone()).collect()
}

fn cluster_stage(c: &Common, fold: usize, k: Option<usize>) -> Result<()> {
    let cfg = load_config(c)?;
    let (cohort, plan, dir) = fold_context(&cfg, fold)?;
    let emb = load_stage_embeddings(&dir, &cohort)?;
    let train_set = cohort.subset(&plan.train);
    let train_emb = subset_embeddings(&cohort, &emb, &train_set);
    let k = k.unwrap_or(cfg.clustering.k_default);
    let seeds = StageSeeds::for_fold(&cfg, fold);
    let gmm = fit_gmm(&train_emb, k, cfg.clustering.tolerance, cfg.clustering.max_iter, seeds.gmm)?;
    save_gmm(&gmm, &dir.join("gmm.txt"))?;
    let slides: Vec<SlideId> = cohort.tiles.iter().map(|t| t.slide_id).collect();
    save_slide_features(&pool_slides(&gmm, &emb, &slides)?, k, &dir.join("slide_features.csv"))?;
    let files = ["gmm.txt", "slide_features.csv"].map(String::from);
    manifest("cluster", &cfg, &dir, &files, "manifest-cluster.json")?;
    log::info!("fold {fold}: k={k}, {} EM iterations", gmm.n_iter);
    Ok(())
}

fn records_for(gmm: &GmmModel, cohort: &Cohort, emb: &[Vec<f64>], part: &Cohort) -> Result<Vec<SurvivalRecord>> {
    let part_emb = subset_embeddings(cohort, emb, part);
    let slides: Vec<SlideId> = part.tiles.iter().map(|t| t.slide_id).collect();
    let feats: BTreeMap<SlideId, Vec<f64>> = pool_slides(gmm, &part_emb, &slides)?
        .into_iter()
        .map(|f| (f.slide_id, f.v))
        .collect();
    Ok(patient_records(part, &feats)?)
}

fn load_gmm_stage(dir: &Path) -> Result<GmmModel> {
    let path = dir.join("gmm.txt");
    load_gmm(&path).with_context(|| format!("run `cluster` first; cannot read {}", path.display()))
}

fn fit_stage(c: &Common, fold: usize, alpha: Option<f64>) -> Result<()> {
    let cfg = load_config(c)?;
    let (cohort, plan, dir) = fold_context(&cfg, fold)?;
    let emb = load_stage_embeddings(&dir, &cohort)?;
    let gmm = load_gmm_stage(&dir)?;
    let recs = records_for(&gmm, &cohort, &emb, &cohort.subset(&plan.train))?;
    let alpha = alpha.unwrap_or(cfg.survival.alpha_default);
    let model = cox_fit(&recs, alpha, CoxFitOptions::default())?;
    write_string(&dir.join("cox.json"), &serde_json::to_string_pretty(&model)?)?;
    let mut hr = String::from("cluster,exp_beta\n");
    for (z, r) in hazard_ratios(&model) {
        hr.push_str(&format!("{z},{r}\n"));
    }
    write_string(&dir.join("hazard_ratios.csv"), &hr)?;
    let files = ["cox.json", "hazard_ratios.csv"].map(String::from);
    manifest("fit", &cfg, &dir, &files, "manifest-fit.json")?;
    log::info!("fold {fold}: Cox converged in {} iterations", model.iterations);
    Ok(())
}

fn evaluate_stage(c: &Common, fold: usize) -> Result<()> {
    let cfg = load_config(c)?;
    let (cohort, plan, dir) = fold_context(&cfg, fold)?;
    let emb = load_stage_embeddings(&dir, &cohort)?;
    let gmm = load_gmm_stage(&dir)?;
    let cox_path = dir.join("cox.json");
    let text = std::fs::read_to_string(&cox_path)
        .with_context(|| format!("run `fit` first; cannot read {}", cox_path.display()))?;
    let model: CoxModel = serde_json::from_str(&text).with_context(|| format!("{}", cox_path.display()))?;
    let recs = records_for(&gmm, &cohort, &emb, &cohort.subset(&plan.test))?;
    let h = cfg.survival.horizon;
    let times: Vec<f64> = recs.iter().map(|r| r.time as f64).collect();
    let events: Vec<bool> = recs.iter().map(|r| r.event).collect();
    let risks: Vec<f64> = recs.iter().map(|r| cox_predict_risk(&model, &r.v)).collect();
    let surv: Vec<f64> = recs.iter().map(|r| cox_predict_survival(&model, &r.v, h)).collect();
    let ci = c_index(&times, &events, &risks)?;
    let brier = brier_score(&times, &events, &surv, h).map(|b| b.to_string()).unwrap_or_default();
    write_string(
        &dir.join("metrics.csv"),
        &format!("method,fold,c_index,brier_2y\n{SSL_COX},{fold},{ci},{brier}\n"),
    )?;
    manifest("evaluate", &cfg, &dir, &["metrics.csv".to_string()], "manifest-evaluate.json")?;
    println!("{SSL_COX} fold {fold}: c_index {ci:.4} brier_2y {brier}");
    Ok(())
}

fn finish(command: &str, cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<()> {
    let out = &cfg.output_dir;
    let mut files = emit_report(report, out)?;
    let saved = ExperimentConfig {
        output_dir: ".".into(),
        ..cfg.clone()
    };
    write_string(&out.join("config.toml"), &saved.to_toml()?)?;
    files.push("config.toml".into());
    manifest(command, cfg, out, &files, "manifest.json")?;
    for f in &report.failures {
        log::warn!("fold {} {} failed: {}", f.fold, f.method, f.error);
    }
    for a in &report.aggregates {
        let brier = a.brier_mean.map_or_else(|| "n/a".to_string(), |b| format!("{b:.3}"));
        println!(
            "{:<14} c_index {:.3} +/- {:.3}  brier_2y {brier}  ({} folds)",
            a.method, a.c_index_mean, a.c_index_ci95, a.n_folds
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => generate(&c),
        Command::Train { common, fold } => train_stage(&common, fold.fold),
        Command::Cluster { common, fold, k } => cluster_stage(&common, fold.fold, k),
        Command::Fit { common, fold, alpha } => fit_stage(&common, fold.fold, alpha),
        Command::Evaluate { common, fold } => evaluate_stage(&common, fold.fold),
        Command::Run { common, no_baselines } => {
            let cfg = load_config(&common)?;
            let report = if no_baselines { run_pipeline(&cfg)? } else { run_baselines(&cfg)? };
            finish("run", &cfg, &report)
        }
        Command::Ablate { common, arms } => {
            let cfg = load_config(&common)?;
            let arms = arms.unwrap_or_else(|| {
                if cfg.ablation_arms.is_empty() {
                    default_arms()
                } else {
                    cfg.ablation_arms.clone()
                }
            });
            let report = run_ablation(&cfg, &arms)?;
            finish("ablate", &cfg, &report)
        }
        Command::Report { common, from } => {
            let cfg = load_config(&common)?;
            let path = from.unwrap_or_else(|| cfg.output_dir.join("report.json"));
            let report = ExperimentReport::load(&path)?;
            let files = emit_report(&report, &cfg.output_dir)?;
            manifest("report", &cfg, &cfg.output_dir, &files, "manifest.json")?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
