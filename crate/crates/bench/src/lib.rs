//! Fixtures shared by the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use condssl::cohort::TileRecord;
use condssl::contrastive::{BatchViews, EncoderConfig, EncoderState};
use condssl::survival::SurvivalRecord;

pub fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let centre = (i % 8) as f64 * 3.0;
            (0..d)
                .map(|j| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g + if j % 8 == i % 8 { centre } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

/// Encoder at the default width with a full queue, plus one batch of views.
pub fn encoder_fixture(input: usize, batch: usize, queue: usize, seed: u64) -> (EncoderState, BatchViews) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EncoderConfig::default();
    let mut state = EncoderState::new(input, &cfg, queue, &mut rng).expect("valid encoder config");
    let keys: Vec<Vec<f64>> = gaussian_rows(queue, cfg.embed_dim, seed + 1)
        .into_iter()
        .map(|mut v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            v
        })
        .collect();
    state.queue.push_batch(&keys);
    let views = BatchViews {
        query: gaussian_rows(batch, input, seed + 2),
        key: gaussian_rows(batch, input, seed + 3),
    };
    (state, views)
}

pub fn survival_records(n: usize, d: usize, seed: u64) -> Vec<SurvivalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rate = 0.2 * (0.7 * v[0] - 0.4 * v[d - 1]).exp();
            let t = (-rng.random::<f64>().ln() / rate) as u32;
            SurvivalRecord::new(i as u64, v, rng.random::<f64>() < 0.7, t.min(20))
        })
        .collect()
}

pub fn tiles(slides: usize, per_slide: usize) -> Vec<TileRecord> {
    (0..slides * per_slide)
        .map(|i| TileRecord {
            tile_id: i as u64,
            slide_id: (i / per_slide) as u64,
            patient_id: (i / per_slide) as u64,
            features: Vec::new(),
            true_cluster: None,
        })
        .collect()
}
