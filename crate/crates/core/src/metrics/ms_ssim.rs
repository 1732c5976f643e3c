//! Multi-scale structural similarity, computed like `pytorch_msssim`:
//! separable 11-tap Gaussian (σ = 1.5) applied without padding, 2×2 average
//! pooling between scales (zero-padded on odd axes), `relu` on the contrast
//! terms, data range 1.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Debug)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn zip(&self, o: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            v: self.v.iter().zip(&o.v).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

fn window() -> [f64; WINDOW] {
    let mut g = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-(d * d) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Valid filtering along each axis that is at least as long as the window;
/// shorter axes are left unfiltered.
fn blur(p: &Plane, g: &[f64; WINDOW]) -> Plane {
    let mut cur = p.clone();
    if cur.h >= WINDOW {
        let oh = cur.h - WINDOW + 1;
        let mut v = vec![0.0; oh * cur.w];
        for y in 0..oh {
            for x in 0..cur.w {
                v[y * cur.w + x] = (0..WINDOW).map(|k| g[k] * cur.v[(y + k) * cur.w + x]).sum();
            }
        }
        cur = Plane { h: oh, w: cur.w, v };
    }
    if cur.w >= WINDOW {
        let ow = cur.w - WINDOW + 1;
        let mut v = vec![0.0; cur.h * ow];
        for y in 0..cur.h {
            for x in 0..ow {
                v[y * ow + x] = (0..WINDOW).map(|k| g[k] * cur.v[y * cur.w + x + k]).sum();
            }
        }
        cur = Plane { h: cur.h, w: ow, v };
    }
    cur
}

/// Returns `(mean SSIM, mean contrast-structure)`.
fn ssim(x: &Plane, y: &Plane, g: &[f64; WINDOW]) -> (f64, f64) {
    let (c1, c2) = (K1 * K1, K2 * K2);
    let mu1 = blur(x, g);
    let mu2 = blur(y, g);
    let xx = blur(&x.zip(x, |a, b| a * b), g);
    let yy = blur(&y.zip(y, |a, b| a * b), g);
    let xy = blur(&x.zip(y, |a, b| a * b), g);
    let n = mu1.v.len() as f64;
    let (mut s, mut cs) = (0.0, 0.0);
    for i in 0..mu1.v.len() {
        let (m1, m2) = (mu1.v[i], mu2.v[i]);
        let s1 = xx.v[i] - m1 * m1;
        let s2 = yy.v[i] - m2 * m2;
        let s12 = xy.v[i] - m1 * m2;
        let c = (2.0 * s12 + c2) / (s1 + s2 + c2);
        cs += c;
        s += (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1) * c;
    }
    (s / n, cs / n)
}

fn pool(p: &Plane) -> Plane {
    let (py, px) = (p.h % 2, p.w % 2);
    let (oh, ow) = ((p.h + 2 * py - 2) / 2 + 1, (p.w + 2 * px - 2) / 2 + 1);
    let at = |y: isize, x: isize| {
        if y < 0 || x < 0 || y >= p.h as isize || x >= p.w as isize {
            0.0
        } else {
            p.v[y as usize * p.w + x as usize]
        }
    };
    let mut v = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let y = (2 * oy) as isize - py as isize;
            let x = (2 * ox) as isize - px as isize;
            v.push((at(y, x) + at(y, x + 1) + at(y + 1, x) + at(y + 1, x + 1)) / 4.0);
        }
    }
    Plane { h: oh, w: ow, v }
}

/// Smallest image extent accepted for `levels` scales.
pub fn min_extent(levels: usize) -> usize {
    (WINDOW - 1) << levels.saturating_sub(1)
}

/// Largest number of scales (at most 5) an extent supports.
pub fn max_levels(extent: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len()).rev().find(|&l| extent >= min_extent(l)).unwrap_or(1)
}

/// MS-SSIM with explicit per-scale weights, averaged over batch and channels.
pub fn ms_ssim_weighted(x: &Tensor, y: &Tensor, weights: &[f64]) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::Metric(format!("shape mismatch {:?} vs {:?}", x.shape(), y.shape())));
    }
    if weights.is_empty() {
        return Err(Error::Metric("MS-SSIM needs at least one scale".into()));
    }
    let [n, c, h, w] = x.shape();
    let levels = weights.len();
    let extent = h.min(w);
    if extent < min_extent(levels) {
        return Err(Error::Metric(format!(
            "image extent {extent} is below the {} pixels needed for {levels} scales; use at most {} scales",
            min_extent(levels),
            max_levels(extent)
        )));
    }
    let g = window();
    let plane = |t: &Tensor, b, ch| Plane {
        h,
        w,
        v: t.plane(b, ch).iter().map(|&v| v as f64).collect(),
    };
    let mut total = 0.0;
    for b in 0..n {
        for ch in 0..c {
            let (mut px, mut py) = (plane(x, b, ch), plane(y, b, ch));
            let mut value = 1.0;
            for (i, &wt) in weights.iter().enumerate() {
                let (s, cs) = ssim(&px, &py, &g);
                if i + 1 < levels {
                    value *= cs.max(0.0).powf(wt);
                    px = pool(&px);
                    py = pool(&py);
                } else {
                    value *= s.max(0.0).powf(wt);
                }
            }
            total += value;
        }
    }
    Ok(total / (n * c) as f64)
}

/// Five-scale MS-SSIM with the standard weights; needs an extent of at
/// least 160 pixels.
pub fn ms_ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    ms_ssim_weighted(x, y, &MS_SSIM_WEIGHTS)
}

/// MS-SSIM over the first `levels` standard scales with the weights
/// renormalized to sum to one.
pub fn ms_ssim_levels(x: &Tensor, y: &Tensor, levels: usize) -> Result<f64> {
    if !(1..=MS_SSIM_WEIGHTS.len()).contains(&levels) {
        return Err(Error::Metric(format!("scale count {levels} outside 1..=5")));
    }
    let sum: f64 = MS_SSIM_WEIGHTS[..levels].iter().sum();
    let w: Vec<f64> = MS_SSIM_WEIGHTS[..levels].iter().map(|v| v / sum).collect();
    ms_ssim_weighted(x, y, &w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, 3, h, w], |_, c, y, x| ((x * 7 + y * 13 + c * 5) % 17) as f32 / 16.0)
    }

    #[test]
    fn window_matches_reference_taps() {
        let g = window();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // exp(-25/4.5) / Σ, from numpy.
        assert!((g[0] - 0.001_028_380_084_479_11).abs() < 1e-15);
        assert!((g[5] - 0.266_011_724_861_794_36).abs() < 1e-15);
    }

    #[test]
    fn identical_is_one() {
        let x = pattern(170, 181);
        assert_eq!(ms_ssim(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn too_small_suggests_fewer_scales() {
        let x = pattern(100, 200);
        let err = ms_ssim(&x, &x).unwrap_err().to_string();
        assert!(err.contains("at most 4 scales"), "{err}");
        assert_eq!(ms_ssim_levels(&x, &x, 4).unwrap(), 1.0);
        assert_eq!(max_levels(100), 4);
        assert_eq!(max_levels(160), 5);
        assert_eq!(max_levels(3), 1);
    }

    #[test]
    fn pooling_pads_odd_axes() {
        let p = Plane {
            h: 3,
            w: 2,
            v: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        let q = pool(&p);
        assert_eq!((q.h, q.w), (2, 1));
        assert_eq!(q.v, [(1.0 + 2.0) / 4.0, (3.0 + 4.0 + 5.0 + 6.0) / 4.0]);
    }
}
