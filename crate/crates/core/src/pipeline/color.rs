//! Quantized per-channel color statistics and the matching color fix
//! `x̂ᶜ = (x̂ − μ_x̂) / σ_x̂ · σ̂_x + μ̂_x`.
//!
//! Statistics use the population (1/N) convention.

use crate::container::ColorPayload;
use crate::error::Result;
use crate::tensor::Tensor;

const LEVELS: f64 = 65535.0;
/// Channels whose reconstruction is flatter than this are copied through.
pub const MIN_STD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColorStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// Mean and population standard deviation of each of the first three
/// channels, over all batch entries and pixels.
pub fn color_stats(image: &Tensor) -> ColorStats {
    let [n, _, h, w] = image.shape();
    let count = (n * h * w) as f64;
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for c in 0..3 {
        let vals = (0..n).flat_map(|b| image.plane(b, c).iter());
        let m = vals.clone().map(|&v| v as f64).sum::<f64>() / count;
        let var = vals.map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / count;
        mean[c] = m;
        std[c] = var.sqrt();
    }
    ColorStats { mean, std }
}

/// `floor(v·65535 + ½)`, clamped to the 16-bit range.
pub fn quantize_stat(v: f64) -> u16 {
    (v * LEVELS + 0.5).floor().clamp(0.0, LEVELS) as u16
}

pub fn dequantize_stat(k: u16) -> f64 {
    k as f64 / LEVELS
}

impl ColorStats {
    pub fn quantize(&self) -> ColorPayload {
        ColorPayload {
            mean: self.mean.map(quantize_stat),
            std: self.std.map(quantize_stat),
        }
    }

    pub fn from_payload(p: &ColorPayload) -> Self {
        Self {
            mean: p.mean.map(dequantize_stat),
            std: p.std.map(dequantize_stat),
        }
    }
}

/// The affine correction without clamping.
pub fn color_fix_raw(image: &Tensor, payload: &ColorPayload) -> Result<Tensor> {
    let cur = color_stats(image);
    let target = ColorStats::from_payload(payload);
    let [n, c, h, w] = image.shape();
    let mut out = image.clone();
    let hw = h * w;
    for b in 0..n {
        for ch in 0..c.min(3) {
            if cur.std[ch] <= MIN_STD {
                continue;
            }
            let scale = target.std[ch] / cur.std[ch];
            let start = (b * c + ch) * hw;
            for v in &mut out.data_mut()[start..start + hw] {
                *v = ((*v as f64 - cur.mean[ch]) * scale + target.mean[ch]) as f32;
            }
        }
    }
    Ok(out)
}

/// The correction clamped to `[0, 1]`.
pub fn color_fix(image: &Tensor, payload: &ColorPayload) -> Result<Tensor> {
    Ok(color_fix_raw(image, payload)?.map(|v| v.clamp(0.0, 1.0)))
}
