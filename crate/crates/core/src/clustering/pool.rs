use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GmmModel, PreparedGmm};
use crate::cohort::SlideId;
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

/// Mean cluster posterior over a slide's tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideFeature {
    pub slide_id: SlideId,
    pub v: Vec<f64>,
}

pub fn pool_slide(model: &GmmModel, slide_id: SlideId, tiles: &[&[f64]]) -> Result<SlideFeature> {
    pool_prepared(&model.prepare(), model.k(), slide_id, tiles)
}

fn pool_prepared(model: &PreparedGmm<'_>, k: usize, slide_id: SlideId, tiles: &[&[f64]]) -> Result<SlideFeature> {
    if tiles.is_empty() {
        return Err(Error::Insufficient(format!("slide {slide_id} has no tiles")));
    }
    let mut v = vec![0.0; k];
    for x in tiles {
        for (acc, p) in v.iter_mut().zip(model.posterior(x)?) {
            *acc += p;
        }
    }
    v.iter_mut().for_each(|x| *x /= tiles.len() as f64);
    Ok(SlideFeature { slide_id, v })
}

/// Pools every slide; output sorted by slide id.
pub fn pool_slides(model: &GmmModel, embeddings: &[Vec<f64>], slide_ids: &[SlideId]) -> Result<Vec<SlideFeature>> {
    let mut groups: BTreeMap<SlideId, Vec<&[f64]>> = BTreeMap::new();
    for (e, &s) in embeddings.iter().zip(slide_ids) {
        groups.entry(s).or_default().push(e.as_slice());
    }
    let prepared = model.prepare();
    groups
        .into_iter()
        .map(|(s, tiles)| pool_prepared(&prepared, model.k(), s, &tiles))
        .collect()
}

/// CSV `slide_id,v0,...,v{k-1}`.
pub fn save_slide_features(features: &[SlideFeature], k: usize, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        write!(w, "slide_id")?;
        for z in 0..k {
            write!(w, ",v{z}")?;
        }
        writeln!(w)?;
        for f in features {
            write!(w, "{}", f.slide_id)?;
            for x in &f.v {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}
