use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Cohort, PatientOutcome, TileRecord};
use crate::error::{Error, Result};

/// Parameters of the synthetic cohort generator.
///
/// Tiles are drawn from `n_true_clusters` Gaussian clusters whose means sit on
/// the vertices of a cross-polytope in the leading `feature_dim - stain_dims`
/// coordinates, so every pair of means is at least `cluster_separation` apart.
/// Each slide adds an offset drawn from `N(0, batch_effect_scale^2)` on the
/// trailing `stain_dims` coordinates (all coordinates when
/// `stain_dims == feature_dim`), and each tile adds isotropic noise with
/// standard deviation `noise_scale`.
///
/// Patient event times are exponential with rate
/// `baseline_rate * exp(hazard_coefficients . mixture)`, where `mixture` is the
/// patient's cluster mixture, floored to whole 6-month units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_patients: usize,
    pub slides_per_patient: usize,
    pub tiles_per_slide: usize,
    pub feature_dim: usize,
    pub stain_dims: usize,
    pub n_true_clusters: usize,
    pub cluster_separation: f64,
    pub batch_effect_scale: f64,
    pub noise_scale: f64,
    pub hazard_coefficients: Vec<f64>,
    /// Event rate per 6-month unit for a patient with zero log-hazard.
    pub baseline_rate: f64,
    pub censoring_rate: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_patients: 120,
            slides_per_patient: 1,
            tiles_per_slide: 64,
            feature_dim: 8,
            stain_dims: 4,
            n_true_clusters: 4,
            cluster_separation: 3.0,
            batch_effect_scale: 3.0,
            noise_scale: 0.5,
            hazard_coefficients: vec![2.0, 2.0, -1.0, -1.0],
            baseline_rate: 0.15,
            censoring_rate: 0.3,
            seed: 7,
        }
    }
}

impl CohortConfig {
    pub fn cluster_dims(&self) -> usize {
        if self.stain_dims >= self.feature_dim {
            self.feature_dim
        } else {
            self.feature_dim - self.stain_dims
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if self.stain_dims > self.feature_dim {
            return bad(format!(
                "stain_dims {} exceeds feature_dim {}",
                self.stain_dims, self.feature_dim
            ));
        }
        if self.slides_per_patient == 0 || self.tiles_per_slide == 0 {
            return bad("slides_per_patient and tiles_per_slide must be positive".into());
        }
        let max_clusters = 2 * self.cluster_dims();
        if self.n_true_clusters == 0 || self.n_true_clusters > max_clusters {
            return bad(format!(
                "n_true_clusters must be in 1..={max_clusters} for {} cluster dimensions",
                self.cluster_dims()
            ));
        }
        if self.hazard_coefficients.len() != self.n_true_clusters {
            return bad(format!(
                "{} hazard coefficients for {} clusters",
                self.hazard_coefficients.len(),
                self.n_true_clusters
            ));
        }
        if !(self.batch_effect_scale.is_finite() && self.batch_effect_scale >= 0.0) {
            return bad("batch_effect_scale must be finite and non-negative".into());
        }
        if !(self.noise_scale.is_finite() && self.noise_scale > 0.0) {
            return bad("noise_scale must be finite and positive".into());
        }
        if !(self.cluster_separation.is_finite() && self.cluster_separation >= 0.0) {
            return bad("cluster_separation must be finite and non-negative".into());
        }
        if !(self.baseline_rate.is_finite() && self.baseline_rate > 0.0) {
            return bad("baseline_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.censoring_rate) {
            return bad("censoring_rate must lie in [0, 1)".into());
        }
        if self.hazard_coefficients.iter().any(|b| !b.is_finite()) {
            return bad("hazard coefficients must be finite".into());
        }
        Ok(())
    }
}

/// Cluster means: vertex `z` of the cross-polytope is `+-s/sqrt(2)` on axis
/// `z / 2`, which puts adjacent vertices exactly `s` apart.
pub fn cluster_means(config: &CohortConfig) -> Vec<Vec<f64>> {
    let radius = config.cluster_separation / std::f64::consts::SQRT_2;
    (0..config.n_true_clusters)
        .map(|z| {
            let mut mu = vec![0.0; config.feature_dim];
            mu[z / 2] = if z % 2 == 0 { radius } else { -radius };
            mu
        })
        .collect()
}

pub fn generate_cohort(config: &CohortConfig) -> Result<Cohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.feature_dim;
    let k = config.n_true_clusters;
    let means = cluster_means(config);
    let stain_start = d - config.stain_dims.min(d);
    let stain_range = if config.stain_dims == d { 0..d } else { stain_start..d };

    let mut tiles = Vec::with_capacity(config.n_patients * config.slides_per_patient * config.tiles_per_slide);
    let mut mixtures = Vec::with_capacity(config.n_patients);
    let mut slide_id = 0u64;
    let mut tile_id = 0u64;

    for patient in 0..config.n_patients {
        // Symmetric Dirichlet(1) via normalized Exp(1) draws.
        let mut mix: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = mix.iter().sum();
        mix.iter_mut().for_each(|w| *w /= total);

        for _ in 0..config.slides_per_patient {
            let mut offset = vec![0.0; d];
            for j in stain_range.clone() {
                let g: f64 = StandardNormal.sample(&mut rng);
                offset[j] = config.batch_effect_scale * g;
            }
            for _ in 0..config.tiles_per_slide {
                let z = sample_categorical(&mix, &mut rng);
                let features = (0..d)
                    .map(|j| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        means[z][j] + offset[j] + config.noise_scale * g
                    })
                    .collect();
                tiles.push(TileRecord {
                    tile_id,
                    slide_id,
                    patient_id: patient as u64,
                    features,
                    true_cluster: Some(z),
                });
                tile_id += 1;
            }
            slide_id += 1;
        }
        mixtures.push(mix);
    }

    let event_times: Vec<f64> = mixtures
        .iter()
        .map(|mix| {
            let log_hazard: f64 = mix.iter().zip(&config.hazard_coefficients).map(|(p, b)| p * b).sum();
            let e: f64 = Exp1.sample(&mut rng);
            e / (config.baseline_rate * log_hazard.exp())
        })
        .collect();

    let horizon = censoring_horizon(&event_times, config.censoring_rate);
    let outcomes = event_times
        .iter()
        .enumerate()
        .map(|(patient, &t)| {
            let censor = match horizon {
                Some(h) => rng.random::<f64>() * h,
                None => f64::INFINITY,
            };
            let event = t <= censor;
            let observed = if event { t } else { censor };
            PatientOutcome {
                patient_id: patient as u64,
                event,
                time: observed.floor() as u32,
            }
        })
        .collect();

    Cohort::new(d, tiles, outcomes)
}

fn sample_categorical(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Upper end `h` of the `Uniform(0, h)` censoring distribution whose expected
/// censored fraction over the given event times equals `rate`. `None` means no
/// censoring.
fn censoring_horizon(event_times: &[f64], rate: f64) -> Option<f64> {
    if rate <= 0.0 || event_times.is_empty() {
        return None;
    }
    let expected = |h: f64| {
        event_times.iter().map(|&t| (t / h).min(1.0)).sum::<f64>() / event_times.len() as f64
    };
    // expected() decreases in h, from 1 (h -> 0) to 0 (h -> inf).
    let mut lo = 1e-9_f64;
    let mut hi = 1.0_f64;
    while expected(hi) > rate {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if expected(mid) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{adjusted_rand_index, spearman};

    #[test]
    fn empty_cohort_for_zero_patients() {
        let c = generate_cohort(&CohortConfig {
            n_patients: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(c.tiles.is_empty());
        assert!(c.outcomes.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = CohortConfig {
            n_patients: 10,
            ..Default::default()
        };
        assert_eq!(generate_cohort(&cfg).unwrap(), generate_cohort(&cfg).unwrap());
        let other = generate_cohort(&CohortConfig { seed: 8, ..cfg.clone() }).unwrap();
        assert_ne!(other, generate_cohort(&cfg).unwrap());
    }

    #[test]
    fn counts_match_config() {
        let cfg = CohortConfig {
            n_patients: 5,
            slides_per_patient: 3,
            tiles_per_slide: 4,
            ..Default::default()
        };
        let c = generate_cohort(&cfg).unwrap();
        assert_eq!(c.tiles.len(), 60);
        assert_eq!(c.slide_index().len(), 15);
        assert_eq!(c.outcomes.len(), 5);
        assert!(c.tiles.iter().all(|t| t.true_cluster.is_some()));
    }

    #[test]
    fn rejects_bad_configs() {
        let zero_dim = CohortConfig {
            feature_dim: 0,
            stain_dims: 0,
            ..Default::default()
        };
        assert!(generate_cohort(&zero_dim).is_err());
        let too_many = CohortConfig {
            n_true_clusters: 9,
            hazard_coefficients: vec![0.0; 9],
            ..Default::default()
        };
        assert!(generate_cohort(&too_many).is_err());
    }

    #[test]
    fn noiseless_two_clusters_are_point_masses() {
        let cfg = CohortConfig {
            n_patients: 20,
            n_true_clusters: 2,
            hazard_coefficients: vec![0.5, -0.5],
            batch_effect_scale: 0.0,
            noise_scale: 1e-12,
            ..Default::default()
        };
        let c = generate_cohort(&cfg).unwrap();
        let truth: Vec<usize> = c.tiles.iter().map(|t| t.true_cluster.unwrap()).collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let means = cluster_means(&cfg);
        let gap = dist(&means[0], &means[1]);
        // Pairwise distances: ~0 within a cluster, the mean gap across.
        for i in (0..c.tiles.len()).step_by(37) {
            for j in (0..c.tiles.len()).step_by(41) {
                let d = dist(&c.tiles[i].features, &c.tiles[j].features);
                if truth[i] == truth[j] {
                    assert!(d < 1e-9);
                } else {
                    assert!((d - gap).abs() < 1e-9);
                }
            }
        }
        // Any distance-threshold clustering recovers the truth exactly.
        let anchor = &c.tiles[0].features;
        let labels: Vec<usize> = c
            .tiles
            .iter()
            .map(|t| usize::from(dist(&t.features, anchor) > 1e-6))
            .collect();
        assert_eq!(adjusted_rand_index(&labels, &truth), 1.0);
    }

    #[test]
    fn censoring_fraction_near_target() {
        for &rate in &[0.0, 0.3, 0.6] {
            let c = generate_cohort(&CohortConfig {
                n_patients: 600,
                tiles_per_slide: 1,
                censoring_rate: rate,
                ..Default::default()
            })
            .unwrap();
            let censored = c.outcomes.iter().filter(|o| !o.event).count() as f64 / 600.0;
            assert!((censored - rate).abs() < 0.1, "rate {rate}: realized {censored}");
        }
    }

    #[test]
    fn hazard_is_monotone_in_risky_cluster_share() {
        let cfg = CohortConfig {
            n_patients: 600,
            tiles_per_slide: 50,
            n_true_clusters: 3,
            hazard_coefficients: vec![2.0, 0.0, 0.0],
            censoring_rate: 0.0,
            ..Default::default()
        };
        let c = generate_cohort(&cfg).unwrap();
        let mut share = vec![0.0; cfg.n_patients];
        for t in &c.tiles {
            if t.true_cluster == Some(0) {
                share[t.patient_id as usize] += 1.0 / 50.0;
            }
        }
        let times: Vec<f64> = c.outcomes.iter().map(|o| o.time as f64).collect();
        // Higher share of the risky cluster -> earlier events.
        assert!(spearman(&share, &times) < 0.0);
    }
}
