//! Slide-conditional contrastive learning for whole-slide-image tile
//! embeddings, Gaussian-mixture slide featurization and survival models.

pub mod clustering;
pub mod cohort;
pub mod contrastive;
pub mod error;
pub mod fsutil;
pub mod nn;
pub mod pipeline;
pub mod sampling;
pub mod stats;
pub mod survival;

pub use error::{Error, Result};
