//! The four-step quadtree autoregressive Gaussian entropy model.

pub mod context;
pub mod gaussian;
pub mod quant;

pub use context::{apply_lrp, predict_params, GaussianParams, RateEstimate};
pub use gaussian::{build_cdf, GaussianCdf};
pub use quant::{merge, partition, quantize, GROUP_OFFSETS};
