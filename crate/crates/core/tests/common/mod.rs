//! Shared fixtures for the integration tests and the acceptance harness.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scodec::nets::{TransformConfig, WeightStore};
use scodec::pipeline::Codec;
use scodec::Tensor;

pub fn tiny_store(seed: u64) -> WeightStore {
    WeightStore::random(&TransformConfig::tiny(), seed).unwrap()
}

pub fn tiny_codec(seed: u64) -> Codec {
    Codec::new(&tiny_store(seed)).unwrap()
}

/// A smooth gradient with a few random edges and light noise, in `[0, 1]`.
pub fn fuzz_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
    let slope: [(f32, f32); 3] = std::array::from_fn(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let edge = (rng.random_range(0..h.max(1)), rng.random_range(0..w.max(1)));
    let noise: Vec<f32> = (0..3 * h * w).map(|_| rng.random_range(-0.05..0.05)).collect();
    Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
        let (sy, sx) = slope[c];
        let mut v = base[c] + 0.3 * (sy * y as f32 / h as f32 + sx * x as f32 / w as f32);
        if y > edge.0 && x < edge.1 {
            v = 1.0 - v;
        }
        (v + noise[(c * h + y) * w + x]).clamp(0.0, 1.0)
    })
}

/// Uniform values in `±amp` on a latent shape.
pub fn random_field(shape: [usize; 4], amp: f32, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-amp..=amp)).collect()).unwrap()
}
