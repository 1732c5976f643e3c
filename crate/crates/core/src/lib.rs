//! Latent-space image codec: deterministic transform inference, a four-step
//! quadtree autoregressive entropy model over a range coder, a versioned
//! container, one-step denoising, tiled aggregation and a quantized color fix.

pub mod container;
pub mod entropy;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod nets;
pub mod par;
pub mod pipeline;
pub mod range_coder;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
