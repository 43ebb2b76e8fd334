//! Batch composition for contrastive training.
//!
//! Three regimes: uniform random tiles, two-level conditional sampling (draw
//! `n` slides, then `m / n` tiles from each), and fully conditional sampling
//! where the whole batch comes from a single slide.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{SlideId, TileId, TileRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SamplerMode {
    Random,
    /// `n` slides per batch.
    Conditional(usize),
    /// All tiles of a batch share one slide.
    FullyConditional,
}

impl SamplerMode {
    /// Slides per batch, `None` for random sampling.
    pub fn slides_per_batch(self) -> Option<usize> {
        match self {
            SamplerMode::Random => None,
            SamplerMode::Conditional(n) => Some(n),
            SamplerMode::FullyConditional => Some(1),
        }
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerMode::Random => write!(f, "random"),
            SamplerMode::Conditional(n) => write!(f, "cond:{n}"),
            SamplerMode::FullyConditional => write!(f, "cond:1"),
        }
    }
}

impl FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("random") {
            return Ok(SamplerMode::Random);
        }
        let n = s
            .strip_prefix("cond:")
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| Error::Config(format!("sampler must be `random` or `cond:N`, got {s:?}")))?;
        match n {
            0 => Err(Error::Config("cond:N needs N >= 1".into())),
            1 => Ok(SamplerMode::FullyConditional),
            n => Ok(SamplerMode::Conditional(n)),
        }
    }
}

impl TryFrom<String> for SamplerMode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SamplerMode> for String {
    fn from(m: SamplerMode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub batch_size: usize,
    pub mode: SamplerMode,
}

impl BatchSpec {
    pub fn new(batch_size: usize, mode: SamplerMode) -> Result<Self> {
        let spec = BatchSpec { batch_size, mode };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.batch_size;
        if m == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if let SamplerMode::Conditional(n) = self.mode {
            if n < 2 || n > m {
                return Err(Error::Config(format!("cond:{n} needs 1 < n <= batch size {m}")));
            }
            if !m.is_multiple_of(n) {
                return Err(Error::Config(format!("cond:{n} does not divide batch size {m}")));
            }
        }
        Ok(())
    }

    fn tiles_per_slide(&self) -> Option<usize> {
        self.mode.slides_per_batch().map(|n| self.batch_size / n)
    }
}

/// Tiles grouped by slide; positions refer to the tile slice the pool was
/// built from.
#[derive(Debug, Clone)]
pub struct TilePool {
    tile_ids: Vec<TileId>,
    tile_slides: Vec<SlideId>,
    slides: Vec<(SlideId, Vec<usize>)>,
}

impl TilePool {
    pub fn new(tiles: &[TileRecord]) -> Self {
        let mut by_slide: BTreeMap<SlideId, Vec<usize>> = BTreeMap::new();
        for (i, t) in tiles.iter().enumerate() {
            by_slide.entry(t.slide_id).or_default().push(i);
        }
        TilePool {
            tile_ids: tiles.iter().map(|t| t.tile_id).collect(),
            tile_slides: tiles.iter().map(|t| t.slide_id).collect(),
            slides: by_slide.into_iter().collect(),
        }
    }

    pub fn n_tiles(&self) -> usize {
        self.tile_ids.len()
    }

    pub fn n_slides(&self) -> usize {
        self.slides.len()
    }

    fn batch(&self, positions: Vec<usize>) -> Batch {
        Batch {
            tile_ids: positions.iter().map(|&p| self.tile_ids[p]).collect(),
            slide_ids: positions.iter().map(|&p| self.tile_slides[p]).collect(),
            positions,
        }
    }

    fn eligible(&self, per_slide: usize) -> Vec<usize> {
        (0..self.slides.len())
            .filter(|&s| self.slides[s].1.len() >= per_slide)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Positions into the tile slice the pool was built from.
    pub positions: Vec<usize>,
    pub tile_ids: Vec<TileId>,
    pub slide_ids: Vec<SlideId>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Multiplicity of each slide in the batch.
    pub fn slide_counts(&self) -> BTreeMap<SlideId, usize> {
        let mut counts = BTreeMap::new();
        for &s in &self.slide_ids {
            *counts.entry(s).or_insert(0) += 1;
        }
        counts
    }
}

/// Draws one batch.
pub fn sample_batch(pool: &TilePool, spec: &BatchSpec, rng: &mut impl Rng) -> Result<Batch> {
    spec.validate()?;
    let m = spec.batch_size;
    match spec.tiles_per_slide() {
        None => {
            if pool.n_tiles() < m {
                return Err(Error::Insufficient(format!(
                    "batch of {m} needs {m} tiles, pool has {}",
                    pool.n_tiles()
                )));
            }
            let positions = index::sample(rng, pool.n_tiles(), m).into_vec();
            Ok(pool.batch(positions))
        }
        Some(per) => {
            let n = m / per;
            let eligible = pool.eligible(per);
            if eligible.len() < n {
                return Err(Error::Insufficient(format!(
                    "{} needs {n} slides with at least {per} tiles, found {}",
                    spec.mode,
                    eligible.len()
                )));
            }
            let mut positions = Vec::with_capacity(m);
            for pick in index::sample(rng, eligible.len(), n) {
                let tiles = &pool.slides[eligible[pick]].1;
                positions.extend(index::sample(rng, tiles.len(), per).into_iter().map(|i| tiles[i]));
            }
            Ok(pool.batch(positions))
        }
    }
}

/// One epoch of batches.
///
/// Random mode shuffles all tiles and cuts them into full batches. Conditional
/// modes cut each eligible slide's shuffled tiles into `m / n` chunks and then
/// repeatedly take one chunk from each of `n` distinct slides until fewer than
/// `n` slides have chunks left; batch order is shuffled at the end. Slides
/// with fewer than `m / n` tiles sit the epoch out.
pub fn epoch_schedule(pool: &TilePool, spec: &BatchSpec, rng: &mut impl Rng) -> Result<Vec<Batch>> {
    spec.validate()?;
    let m = spec.batch_size;
    match spec.tiles_per_slide() {
        None => {
            if pool.n_tiles() < m {
                return Err(Error::Insufficient(format!(
                    "batch of {m} needs {m} tiles, pool has {}",
                    pool.n_tiles()
                )));
            }
            let mut order: Vec<usize> = (0..pool.n_tiles()).collect();
            order.shuffle(rng);
            Ok(order.chunks_exact(m).map(|c| pool.batch(c.to_vec())).collect())
        }
        Some(per) => {
            let n = m / per;
            let eligible = pool.eligible(per);
            let skipped = pool.n_slides() - eligible.len();
            if skipped > 0 {
                log::info!("{skipped} slides have fewer than {per} tiles and are skipped this epoch");
            }
            if eligible.len() < n {
                return Err(Error::Insufficient(format!(
                    "{} needs {n} slides with at least {per} tiles, found {}",
                    spec.mode,
                    eligible.len()
                )));
            }
            let mut chunks: Vec<Vec<Vec<usize>>> = eligible
                .iter()
                .map(|&s| {
                    let mut tiles = pool.slides[s].1.clone();
                    tiles.shuffle(rng);
                    tiles.chunks_exact(per).map(<[usize]>::to_vec).collect()
                })
                .collect();
            // Each batch takes the n slides with the most chunks left, ties broken
            // at random, so an epoch strands fewer than n slides' worth of chunks.
            let mut batches = Vec::new();
            loop {
                let mut order: Vec<usize> = (0..chunks.len()).filter(|&s| !chunks[s].is_empty()).collect();
                if order.len() < n {
                    break;
                }
                order.shuffle(rng);
                order.sort_by_key(|&s| std::cmp::Reverse(chunks[s].len()));
                let mut positions = Vec::with_capacity(m);
                for &s in &order[..n] {
                    positions.extend(chunks[s].pop().expect("slide has chunks"));
                }
                batches.push(pool.batch(positions));
            }
            batches.shuffle(rng);
            Ok(batches)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn tiles(slides: usize, per_slide: usize) -> Vec<TileRecord> {
        (0..slides * per_slide)
            .map(|i| TileRecord {
                tile_id: i as u64,
                slide_id: (i / per_slide) as u64,
                patient_id: (i / per_slide) as u64,
                features: vec![],
                true_cluster: None,
            })
            .collect()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn parse_modes() {
        assert_eq!("random".parse::<SamplerMode>().unwrap(), SamplerMode::Random);
        assert_eq!("cond:4".parse::<SamplerMode>().unwrap(), SamplerMode::Conditional(4));
        assert_eq!("cond:1".parse::<SamplerMode>().unwrap(), SamplerMode::FullyConditional);
        assert!("cond:x".parse::<SamplerMode>().is_err());
        assert!("cond:0".parse::<SamplerMode>().is_err());
        assert_eq!(SamplerMode::Conditional(16).to_string(), "cond:16");
    }

    #[test]
    fn spec_validation() {
        assert!(BatchSpec::new(128, SamplerMode::Conditional(3)).is_err());
        assert!(BatchSpec::new(8, SamplerMode::Conditional(16)).is_err());
        assert!(BatchSpec::new(0, SamplerMode::Random).is_err());
        assert!(BatchSpec::new(128, SamplerMode::Conditional(4)).is_ok());
    }

    #[test]
    fn conditional_four_of_128() {
        let pool = TilePool::new(&tiles(20, 40));
        let spec = BatchSpec::new(128, SamplerMode::Conditional(4)).unwrap();
        let b = sample_batch(&pool, &spec, &mut rng(0)).unwrap();
        assert_eq!(b.len(), 128);
        let counts = b.slide_counts();
        assert_eq!(counts.len(), 4);
        assert!(counts.values().all(|&c| c == 32));
        let unique: HashSet<_> = b.positions.iter().collect();
        assert_eq!(unique.len(), 128);
    }

    #[test]
    fn fully_conditional_single_slide() {
        let pool = TilePool::new(&tiles(5, 10));
        let spec = BatchSpec::new(8, SamplerMode::FullyConditional).unwrap();
        let b = sample_batch(&pool, &spec, &mut rng(1)).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b.slide_counts().len(), 1);
    }

    #[test]
    fn deficits_are_reported() {
        let pool = TilePool::new(&tiles(3, 40));
        let spec = BatchSpec::new(128, SamplerMode::Conditional(4)).unwrap();
        let err = sample_batch(&pool, &spec, &mut rng(0)).unwrap_err().to_string();
        assert!(err.contains("found 3"), "{err}");
        let small = TilePool::new(&tiles(2, 2));
        assert!(sample_batch(&small, &BatchSpec::new(8, SamplerMode::Random).unwrap(), &mut rng(0)).is_err());
    }

    #[test]
    fn random_epoch_exact_division() {
        let pool = TilePool::new(&tiles(256, 1));
        let spec = BatchSpec::new(128, SamplerMode::Random).unwrap();
        let sched = epoch_schedule(&pool, &spec, &mut rng(2)).unwrap();
        assert_eq!(sched.len(), 2);
        let covered: HashSet<_> = sched.iter().flat_map(|b| b.positions.iter().copied()).collect();
        assert_eq!(covered.len(), 256);
        assert_eq!(sched, epoch_schedule(&pool, &spec, &mut rng(2)).unwrap());
    }

    #[test]
    fn conditional_epoch_uses_each_slide_once() {
        let pool = TilePool::new(&tiles(16, 32));
        let spec = BatchSpec::new(128, SamplerMode::Conditional(4)).unwrap();
        let sched = epoch_schedule(&pool, &spec, &mut rng(3)).unwrap();
        assert_eq!(sched.len(), 4);
        let mut appearances = BTreeMap::new();
        for b in &sched {
            for s in b.slide_counts().keys() {
                *appearances.entry(*s).or_insert(0) += 1;
            }
        }
        assert_eq!(appearances.len(), 16);
        assert!(appearances.values().all(|&c| c == 1));
    }

    #[test]
    fn conditional_epoch_coverage() {
        let pool = TilePool::new(&tiles(30, 128));
        for mode in [SamplerMode::Conditional(4), SamplerMode::Conditional(16), SamplerMode::FullyConditional] {
            let spec = BatchSpec::new(128, mode).unwrap();
            let sched = epoch_schedule(&pool, &spec, &mut rng(4)).unwrap();
            let covered: HashSet<_> = sched.iter().flat_map(|b| b.positions.iter().copied()).collect();
            assert!(covered.len() as f64 >= 0.95 * pool.n_tiles() as f64, "{mode}: {}", covered.len());
        }
    }

    #[test]
    fn distinct_slides_with_one_tile_each() {
        let pool = TilePool::new(&tiles(1000, 1));
        let spec = BatchSpec::new(4, SamplerMode::Random).unwrap();
        let mut r = rng(5);
        for _ in 0..1000 {
            assert_eq!(sample_batch(&pool, &spec, &mut r).unwrap().slide_counts().len(), 4);
        }
    }

    #[test]
    fn conditional_m_with_singleton_slides_has_distinct_slides() {
        let pool = TilePool::new(&tiles(50, 1));
        let spec = BatchSpec::new(8, SamplerMode::Conditional(8)).unwrap();
        let b = sample_batch(&pool, &spec, &mut rng(6)).unwrap();
        assert_eq!(b.slide_counts().len(), 8);
        assert!(b.slide_counts().values().all(|&c| c == 1));
    }
}
