//! Tile-level cohorts: the data model shared by every downstream stage.
//!
//! A cohort is a flat list of [`TileRecord`]s plus one [`PatientOutcome`] per
//! patient. Tiles are grouped into slides and slides into patients; every
//! slide belongs to exactly one patient.

mod io;
mod simulate;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_embeddings, load_outcomes, load_tiles, save_embeddings, save_outcomes};
pub use simulate::{cluster_means, generate_cohort, CohortConfig};
pub use split::{split_by_patient, SplitFractions, SplitPlan};

pub type TileId = u64;
pub type SlideId = u64;
pub type PatientId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub tile_id: TileId,
    pub slide_id: SlideId,
    pub patient_id: PatientId,
    pub features: Vec<f64>,
    /// Generating cluster; only known for simulated cohorts.
    pub true_cluster: Option<usize>,
}

/// Recurrence outcome. `time` is in 6-month units; for censored patients it
/// is the follow-up length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientOutcome {
    pub patient_id: PatientId,
    pub event: bool,
    pub time: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub dim: usize,
    pub tiles: Vec<TileRecord>,
    pub outcomes: Vec<PatientOutcome>,
}

impl Cohort {
    /// Builds a cohort and checks its structural invariants.
    pub fn new(dim: usize, tiles: Vec<TileRecord>, outcomes: Vec<PatientOutcome>) -> Result<Self> {
        let cohort = Cohort {
            dim,
            tiles,
            outcomes,
        };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.tiles.len());
        let mut owner: HashMap<SlideId, PatientId> = HashMap::new();
        let patients: HashSet<PatientId> = self.outcomes.iter().map(|o| o.patient_id).collect();
        if patients.len() != self.outcomes.len() {
            return Err(Error::Config("duplicate patient outcome".into()));
        }
        for t in &self.tiles {
            if t.features.len() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    found: t.features.len(),
                });
            }
            if !seen.insert(t.tile_id) {
                return Err(Error::Config(format!("duplicate tile_id {}", t.tile_id)));
            }
            match owner.insert(t.slide_id, t.patient_id) {
                Some(p) if p != t.patient_id => {
                    return Err(Error::Config(format!(
                        "slide {} belongs to patients {} and {}",
                        t.slide_id, p, t.patient_id
                    )))
                }
                _ => {}
            }
            if !patients.contains(&t.patient_id) {
                return Err(Error::Config(format!(
                    "tile {} references patient {} without an outcome",
                    t.tile_id, t.patient_id
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Tile indices grouped by slide, slides in ascending id order.
    pub fn slide_index(&self) -> BTreeMap<SlideId, Vec<usize>> {
        let mut map: BTreeMap<SlideId, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.tiles.iter().enumerate() {
            map.entry(t.slide_id).or_default().push(i);
        }
        map
    }

    /// Slide ids grouped by patient, both in ascending order.
    pub fn patient_slides(&self) -> BTreeMap<PatientId, BTreeSet<SlideId>> {
        let mut map: BTreeMap<PatientId, BTreeSet<SlideId>> = BTreeMap::new();
        for t in &self.tiles {
            map.entry(t.patient_id).or_default().insert(t.slide_id);
        }
        map
    }

    pub fn patient_ids(&self) -> Vec<PatientId> {
        let mut ids: Vec<PatientId> = self.outcomes.iter().map(|o| o.patient_id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn outcome_map(&self) -> HashMap<PatientId, PatientOutcome> {
        self.outcomes.iter().map(|o| (o.patient_id, *o)).collect()
    }

    /// Restriction of the cohort to the given patients. Tile order is preserved.
    pub fn subset(&self, patients: &BTreeSet<PatientId>) -> Cohort {
        Cohort {
            dim: self.dim,
            tiles: self
                .tiles
                .iter()
                .filter(|t| patients.contains(&t.patient_id))
                .cloned()
                .collect(),
            outcomes: self
                .outcomes
                .iter()
                .filter(|o| patients.contains(&o.patient_id))
                .copied()
                .collect(),
        }
    }

    /// Feature matrix view, one row per tile.
    pub fn feature_rows(&self) -> Vec<&[f64]> {
        self.tiles.iter().map(|t| t.features.as_slice()).collect()
    }
}
