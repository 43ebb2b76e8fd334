//! Gaussian-mixture featurization of tile embeddings.
//!
//! A diagonal-covariance mixture is fitted by EM on training tiles; each
//! slide is then summarized by the mean of its tiles' cluster posteriors.

mod gmm;
mod pool;

pub use gmm::{fit_gmm, load_gmm, posterior, save_gmm, softmax_log, GmmModel, PreparedGmm, VARIANCE_FLOOR};
pub use pool::{pool_slide, pool_slides, save_slide_features, SlideFeature};
