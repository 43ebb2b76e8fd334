use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plot;
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, write_string};
use crate::stats::{ci95_half_width, mean};
use crate::survival::KmCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub method: String,
    pub fold: usize,
    pub c_index: f64,
    /// `None` when the IPCW estimate is undefined on this fold.
    pub brier: Option<f64>,
}

/// Mean and 95% CI half-width over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub n_folds: usize,
    pub c_index_mean: f64,
    pub c_index_ci95: f64,
    pub brier_mean: Option<f64>,
    pub brier_ci95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub method: String,
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub name: String,
    pub fold: usize,
    pub values: Vec<f64>,
}

/// Hyperparameters picked on the validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: String,
    pub fold: usize,
    pub k: usize,
    pub alpha: f64,
    /// Mean negative partial log-likelihood on validation patients.
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub method: String,
    pub fold: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmStratum {
    pub label: String,
    pub curve: KmCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub slide_id: u64,
    pub true_cluster: Option<usize>,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    /// Seeds handed to each fold, in fold order.
    pub fold_seeds: Vec<u64>,
    pub rows: Vec<FoldMetrics>,
    pub aggregates: Vec<Aggregate>,
    /// `(cluster, exp(beta))` of the first successful SSL-Cox fold, descending.
    pub hazard_ratios: Vec<(usize, f64)>,
    pub km_strata: Vec<KmStratum>,
    pub probes: Vec<ProbeRow>,
    pub loss_traces: Vec<LossTrace>,
    pub selections: Vec<Selection>,
    /// First-fold test embeddings projected on their top two principal axes.
    pub projection: Vec<ProjectionPoint>,
    pub failures: Vec<FoldFailure>,
}

impl ExperimentReport {
    /// Recomputes `aggregates` from `rows`, one entry per method in order of
    /// first appearance.
    pub fn aggregate(&mut self) {
        let mut order: Vec<&str> = Vec::new();
        let mut by_method: BTreeMap<&str, Vec<&FoldMetrics>> = BTreeMap::new();
        for r in &self.rows {
            if !by_method.contains_key(r.method.as_str()) {
                order.push(&r.method);
            }
            by_method.entry(&r.method).or_default().push(r);
        }
        self.aggregates = order
            .iter()
            .map(|m| {
                let rows = &by_method[m];
                let c: Vec<f64> = rows.iter().map(|r| r.c_index).collect();
                let b: Vec<f64> = rows.iter().filter_map(|r| r.brier).collect();
                Aggregate {
                    method: m.to_string(),
                    n_folds: rows.len(),
                    c_index_mean: mean(&c),
                    c_index_ci95: ci95_half_width(&c),
                    brier_mean: (!b.is_empty()).then(|| mean(&b)),
                    brier_ci95: (!b.is_empty()).then(|| ci95_half_width(&b)),
                }
            })
            .collect();
    }

    pub fn aggregate_for(&self, method: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    /// Per-fold C-index values of one method, in fold order.
    pub fn c_indices(&self, method: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method).map(|r| r.c_index).collect()
    }

    pub fn methods(&self) -> Vec<String> {
        self.aggregates.iter().map(|a| a.method.clone()).collect()
    }

    /// Appends another report's per-method results (used to merge arms).
    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.probes.extend(other.probes);
        self.loss_traces.extend(other.loss_traces);
        self.selections.extend(other.selections);
        self.failures.extend(other.failures);
        if self.hazard_ratios.is_empty() {
            self.hazard_ratios = other.hazard_ratios;
        }
        if self.km_strata.is_empty() {
            self.km_strata = other.km_strata;
        }
        if self.projection.is_empty() {
            self.projection = other.projection;
        }
        if self.fold_seeds.is_empty() {
            self.fold_seeds = other.fold_seeds;
        }
        self.aggregate();
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize report: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const REPORT_FILES: [&str; 10] = [
    "metrics.csv",
    "summary.csv",
    "hazard_ratios.csv",
    "km_strata.csv",
    "loss_traces.csv",
    "probes.csv",
    "selection.csv",
    "projection.csv",
    "failures.csv",
    "report.json",
];

pub const PLOT_FILES: [&str; 5] = ["km.svg", "hazard_ratios.svg", "methods.svg", "loss.svg", "projection.svg"];

/// Writes every report file into `dir`, each through a temp file and rename.
/// Returns the file names written.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = |name: &str, body: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| atomic_write(&dir.join(name), body);

    csv("metrics.csv", &|w| {
        writeln!(w, "method,fold,c_index,brier_2y")?;
        for r in &report.rows {
            writeln!(w, "{},{},{},{}", csv_field(&r.method), r.fold, r.c_index, opt(r.brier))?;
        }
        for a in &report.aggregates {
            writeln!(w, "{},all,{},{}", csv_field(&a.method), a.c_index_mean, opt(a.brier_mean))?;
        }
        Ok(())
    })?;
    csv("summary.csv", &|w| {
        writeln!(w, "method,n_folds,c_index_mean,c_index_ci95,brier_mean,brier_ci95")?;
        for a in &report.aggregates {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                csv_field(&a.method),
                a.n_folds,
                a.c_index_mean,
                a.c_index_ci95,
                opt(a.brier_mean),
                opt(a.brier_ci95)
            )?;
        }
        Ok(())
    })?;
    csv("hazard_ratios.csv", &|w| {
        writeln!(w, "cluster,exp_beta")?;
        for (c, hr) in &report.hazard_ratios {
            writeln!(w, "{c},{hr}")?;
        }
        Ok(())
    })?;
    csv("km_strata.csv", &|w| {
        writeln!(w, "stratum,time,at_risk,events,survival")?;
        for s in &report.km_strata {
            let c = &s.curve;
            for i in 0..c.times.len() {
                writeln!(w, "{},{},{},{},{}", s.label, c.times[i], c.at_risk[i], c.events[i], c.survival[i])?;
            }
        }
        Ok(())
    })?;
    csv("loss_traces.csv", &|w| {
        writeln!(w, "name,fold,epoch,loss")?;
        for t in &report.loss_traces {
            for (e, l) in t.values.iter().enumerate() {
                writeln!(w, "{},{},{},{l}", csv_field(&t.name), t.fold, e + 1)?;
            }
        }
        Ok(())
    })?;
    csv("probes.csv", &|w| {
        writeln!(w, "method,fold,accuracy")?;
        for p in &report.probes {
            writeln!(w, "{},{},{}", csv_field(&p.method), p.fold, p.accuracy)?;
        }
        Ok(())
    })?;
    csv("selection.csv", &|w| {
        writeln!(w, "method,fold,k,alpha,validation_loss")?;
        for s in &report.selections {
            writeln!(w, "{},{},{},{},{}", csv_field(&s.method), s.fold, s.k, s.alpha, opt(s.validation_loss))?;
        }
        Ok(())
    })?;
    csv("projection.csv", &|w| {
        writeln!(w, "slide_id,true_cluster,x,y")?;
        for p in &report.projection {
            let tc = p.true_cluster.map_or_else(String::new, |c| c.to_string());
            writeln!(w, "{},{tc},{},{}", p.slide_id, p.x, p.y)?;
        }
        Ok(())
    })?;
    csv("failures.csv", &|w| {
        writeln!(w, "method,fold,error")?;
        for f in &report.failures {
            writeln!(w, "{},{},{}", csv_field(&f.method), f.fold, csv_field(&f.error))?;
        }
        Ok(())
    })?;
    write_string(&dir.join("report.json"), &report.to_json()?)?;

    write_string(&dir.join("km.svg"), &plot::km_plot(&report.km_strata))?;
    write_string(&dir.join("hazard_ratios.svg"), &plot::hazard_ratio_plot(&report.hazard_ratios))?;
    write_string(&dir.join("methods.svg"), &plot::method_plot(&report.aggregates))?;
    write_string(&dir.join("loss.svg"), &plot::loss_plot(&report.loss_traces))?;
    write_string(&dir.join("projection.svg"), &plot::projection_plot(&report.projection))?;

    Ok(REPORT_FILES.iter().chain(PLOT_FILES.iter()).map(|s| s.to_string()).collect())
}
