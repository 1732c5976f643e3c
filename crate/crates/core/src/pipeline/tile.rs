//! Overlapping tiles blended with Gaussian weight maps.
//!
//! Tiles of `tile × tile` input pixels are laid out with stride
//! `tile − overlap`; the last tile on each axis is aligned to the far edge.
//! Each tile is evaluated on a window that extends `overlap` pixels past it on
//! every side (clipped to the input), so a per-tile function whose receptive
//! margin is at most `overlap` sees exactly the data it would see untiled.
//! The tile's own region of the result is then accumulated with a Gaussian
//! weight centered on the tile.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileConfig {
    pub tile: usize,
    pub overlap: usize,
    /// Standard deviation of the blending weights, in input pixels.
    pub sigma: f64,
}

impl TileConfig {
    /// Gaussian sigma defaults to a quarter of the tile.
    pub fn new(tile: usize, overlap: usize) -> Self {
        Self {
            tile,
            overlap,
            sigma: tile as f64 / 4.0,
        }
    }

    pub fn validate(&self, margin: usize) -> Result<()> {
        if self.tile == 0 {
            return Err(Error::config("tile size must be positive"));
        }
        if self.overlap >= self.tile {
            return Err(Error::config(format!(
                "overlap {} must be smaller than the tile size {}",
                self.overlap, self.tile
            )));
        }
        if self.overlap < margin {
            return Err(Error::config(format!(
                "overlap {} is below the receptive margin {margin} of the tiled function",
                self.overlap
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("tile sigma {} must be positive", self.sigma)));
        }
        Ok(())
    }
}

/// Start offsets of tiles along an axis of length `len`.
pub fn tile_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + tile < len).collect();
    starts.push(len - tile);
    starts.dedup();
    starts
}

struct TileOut {
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
    data: Tensor,
}

/// Applies `f` tile by tile and blends the results.
///
/// `f` maps an `(n, c, h, w)` window to `(n, c', h·out_scale, w·out_scale)`;
/// `margin` is its receptive margin in input pixels.
pub fn tile_process<F>(input: &Tensor, cfg: &TileConfig, margin: usize, out_scale: usize, f: F) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor> + Send + Sync,
{
    cfg.validate(margin)?;
    if out_scale == 0 {
        return Err(Error::config("tile output scale must be positive"));
    }
    let [n, _, h, w] = input.shape();
    let ys = tile_starts(h, cfg.tile, cfg.overlap);
    let xs = tile_starts(w, cfg.tile, cfg.overlap);
    let tiles: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).collect();

    let outputs = par::map(&tiles, |&(y0, x0)| -> Result<TileOut> {
        let th = cfg.tile.min(h);
        let tw = cfg.tile.min(w);
        let wy0 = y0.saturating_sub(cfg.overlap);
        let wx0 = x0.saturating_sub(cfg.overlap);
        let wy1 = (y0 + th + cfg.overlap).min(h);
        let wx1 = (x0 + tw + cfg.overlap).min(w);
        let window = input.crop(wy0, wx0, wy1 - wy0, wx1 - wx0)?;
        let out = f(&window)?;
        let [on, _, oh, ow] = out.shape();
        if on != n || oh != (wy1 - wy0) * out_scale || ow != (wx1 - wx0) * out_scale {
            return Err(Error::Contract(format!(
                "tile function returned {:?} for a {:?} window at scale {out_scale}",
                out.shape(),
                window.shape()
            )));
        }
        let data = out.crop(
            (y0 - wy0) * out_scale,
            (x0 - wx0) * out_scale,
            th * out_scale,
            tw * out_scale,
        )?;
        Ok(TileOut {
            y0: y0 * out_scale,
            x0: x0 * out_scale,
            h: th * out_scale,
            w: tw * out_scale,
            data,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let c = outputs[0].data.channels();
    if outputs.iter().any(|t| t.data.channels() != c) {
        return Err(Error::Contract("tile function changed its channel count between tiles".into()));
    }
    let (oh, ow) = (h * out_scale, w * out_scale);
    let mut num = vec![0.0f64; n * c * oh * ow];
    let mut den = vec![0.0f64; oh * ow];
    let s = cfg.sigma * out_scale as f64;
    let inv = 1.0 / (2.0 * s * s);
    for t in &outputs {
        let (cy, cx) = (t.h as f64 / 2.0, t.w as f64 / 2.0);
        let wy: Vec<f64> = (0..t.h).map(|y| (-(y as f64 + 0.5 - cy).powi(2) * inv).exp()).collect();
        let wx: Vec<f64> = (0..t.w).map(|x| (-(x as f64 + 0.5 - cx).powi(2) * inv).exp()).collect();
        for (y, &ay) in wy.iter().enumerate() {
            for (x, &ax) in wx.iter().enumerate() {
                let wgt = ay * ax;
                let p = (t.y0 + y) * ow + t.x0 + x;
                den[p] += wgt;
                for b in 0..n {
                    for ch in 0..c {
                        num[((b * c + ch) * oh) * ow + p] += wgt * t.data.get(b, ch, y, x) as f64;
                    }
                }
            }
        }
    }
    if let Some(p) = den.iter().position(|&d| d <= 0.0) {
        return Err(Error::config(format!(
            "blending weights vanish at output pixel ({}, {}); increase the tile sigma",
            p / ow,
            p % ow
        )));
    }
    let data = num
        .iter()
        .enumerate()
        .map(|(i, &v)| (v / den[i % (oh * ow)]) as f32)
        .collect();
    Tensor::new([n, c, oh, ow], data)
}
