//! Dense NCHW `f32` tensors and the kernels the codec networks are built from.
//!
//! Everything here is deterministic: the same inputs give bit-identical
//! outputs on every call, with or without the `parallel` feature. Convolution
//! accumulates each output element in one fixed order (input channel, then
//! kernel row, then kernel column, starting from zero; bias added last), which
//! is what lets the encoder and decoder derive identical entropy parameters.

use std::fmt;

use crate::error::{Error, Result};
use crate::par;

/// A dense 4-D array in `(n, c, h, w)` row-major order.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn numel(shape: [usize; 4]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::config(format!(
                "tensor shape {shape:?} implies {} elements, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f32) -> Self {
        Self {
            shape,
            data: vec![value; numel(shape)],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` in storage order.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(numel(shape));
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(b, ch, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    /// One `h × w` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.expect_shape(other.shape, "elementwise operand")?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f32) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn expect_shape(&self, shape: [usize; 4], what: &str) -> Result<()> {
        if self.shape != shape {
            return Err(Error::config(format!(
                "{what}: expected shape {shape:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Largest absolute elementwise difference (infinite on shape mismatch).
    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        if self.shape != other.shape {
            return f32::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::config("concat of zero tensors"))?;
        let [n, _, h, w] = first.shape;
        for p in parts {
            if p.shape[0] != n || p.shape[2] != h || p.shape[3] != w {
                return Err(Error::config(format!(
                    "channel concat: spatial/batch mismatch {:?} vs {:?}",
                    first.shape, p.shape
                )));
            }
        }
        let c: usize = parts.iter().map(|p| p.shape[1]).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for p in parts {
                let per = p.shape[1] * h * w;
                data.extend_from_slice(&p.data[b * per..(b + 1) * per]);
            }
        }
        Ok(Tensor {
            shape: [n, c, h, w],
            data,
        })
    }

    /// Channels `[start, start + count)`.
    pub fn narrow_channels(&self, start: usize, count: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if start + count > c {
            return Err(Error::config(format!(
                "channel slice {start}..{} out of range for {c} channels",
                start + count
            )));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * count * hw);
        for b in 0..n {
            let base = (b * c + start) * hw;
            data.extend_from_slice(&self.data[base..base + count * hw]);
        }
        Ok(Tensor {
            shape: [n, count, h, w],
            data,
        })
    }

    /// Spatial window `[y0, y0 + h) × [x0, x0 + w)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor> {
        let [n, c, sh, sw] = self.shape;
        if y0 + h > sh || x0 + w > sw {
            return Err(Error::config(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds extent {sh}x{sw}"
            )));
        }
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for ch in 0..c {
                for y in y0..y0 + h {
                    let row = self.offset(b, ch, y, x0);
                    data.extend_from_slice(&self.data[row..row + w]);
                }
            }
        }
        Ok(Tensor {
            shape: [n, c, h, w],
            data,
        })
    }

    /// Extends the bottom/right edges to `h × w` by repeating the last row/column.
    pub fn pad_replicate(&self, h: usize, w: usize) -> Result<Tensor> {
        let [n, c, sh, sw] = self.shape;
        if h < sh || w < sw || sh == 0 || sw == 0 {
            return Err(Error::config(format!(
                "cannot replicate-pad {sh}x{sw} to {h}x{w}"
            )));
        }
        Ok(Tensor::from_fn([n, c, h, w], |b, ch, y, x| {
            self.get(b, ch, y.min(sh - 1), x.min(sw - 1))
        }))
    }

    /// Little-endian bytes of the payload, in storage order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Geometry of a 2-D convolution.
///
/// Padding is zero-padding applied symmetrically per axis. Output extent per
/// axis is `(in + 2·pad − kernel) / stride + 1` and must be at least one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Square kernel, stride 1, "same" padding, dense.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            pad_h: kernel / 2,
            pad_w: kernel / 2,
            groups: 1,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::same(in_channels, out_channels, 1)
    }

    /// Depthwise `kh × kw` kernel with "same" padding.
    pub fn depthwise(channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Self {
            in_channels: channels,
            out_channels: channels,
            kernel_h,
            kernel_w,
            stride: 1,
            pad_h: kernel_h / 2,
            pad_w: kernel_w / 2,
            groups: channels,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.pad_h = padding;
        self.pad_w = padding;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    /// Expected weight shape `(out, in / groups, kh, kw)`.
    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups.max(1),
            self.kernel_h,
            self.kernel_w,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("kernel_h", self.kernel_h),
            ("kernel_w", self.kernel_w),
            ("stride", self.stride),
            ("groups", self.groups),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("conv {name} must be positive")));
            }
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::config(format!(
                "conv groups {} must divide in_channels {} and out_channels {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        Ok(())
    }

    pub fn output_extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let axis = |name: &str, len: usize, pad: usize, k: usize| {
            let padded = len + 2 * pad;
            if padded < k {
                return Err(Error::config(format!(
                    "conv {name}: padded extent {padded} smaller than kernel {k}"
                )));
            }
            Ok((padded - k) / self.stride + 1)
        };
        Ok((
            axis("height", h, self.pad_h, self.kernel_h)?,
            axis("width", w, self.pad_w, self.kernel_w)?,
        ))
    }

    /// Receptive-field radius contributed along each axis, in input pixels.
    pub fn radius(&self) -> usize {
        (self.kernel_h / 2).max(self.kernel_w / 2)
    }
}

/// Direct 2-D convolution (cross-correlation, PyTorch layout).
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
    spec.validate()?;
    let [n, c, h, w] = input.shape;
    if c != spec.in_channels {
        return Err(Error::config(format!(
            "conv2d: input has {c} channels, spec expects in_channels = {}",
            spec.in_channels
        )));
    }
    let wshape = spec.weight_shape();
    if weight.shape != wshape {
        let names = ["out_channels", "in_channels/groups", "kernel_h", "kernel_w"];
        let bad = (0..4).find(|&i| weight.shape[i] != wshape[i]).unwrap_or(0);
        return Err(Error::config(format!(
            "conv2d: weight dimension {} is {}, expected {} (weight {:?}, spec {:?})",
            names[bad], weight.shape[bad], wshape[bad], weight.shape, wshape
        )));
    }
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(Error::config(format!(
                "conv2d: bias has {} elements, expected out_channels = {}",
                b.len(),
                spec.out_channels
            )));
        }
    }
    let (oh, ow) = spec.output_extent(h, w)?;
    let out_c = spec.out_channels;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = out_c / spec.groups;
    let (kh, kw, stride) = (spec.kernel_h, spec.kernel_w, spec.stride);
    let (pad_h, pad_w) = (spec.pad_h as isize, spec.pad_w as isize);

    // Output columns `ox` whose input column `ox·stride + kx − pad_w` lies in `[0, w)`.
    let col_range = |kx: usize| -> (usize, usize) {
        let shift = kx as isize - pad_w;
        let s = stride as isize;
        let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
        let hi_excl = {
            let last = w as isize - 1 - shift;
            if last < 0 {
                0
            } else {
                (last / s + 1).min(ow as isize)
            }
        };
        (lo as usize, hi_excl.max(lo) as usize)
    };

    let mut out = vec![0.0f32; n * out_c * oh * ow];
    let wdata = weight.data();
    par::for_each_chunk_mut(&mut out, oh * ow, |idx, acc| {
        let b = idx / out_c;
        let oc = idx % out_c;
        let g = oc / cout_g;
        for icg in 0..cin_g {
            let ic = g * cin_g + icg;
            let src = input.plane(b, ic);
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wdata[((oc * cin_g + icg) * kh + ky) * kw + kx];
                    let (lo, hi) = col_range(kx);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad_h;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut acc[oy * ow + lo..oy * ow + hi];
                        let start = (lo * stride + kx) as isize - pad_w;
                        if stride == 1 {
                            let srow = &row[start as usize..start as usize + (hi - lo)];
                            for (d, &s) in dst.iter_mut().zip(srow) {
                                *d += wv * s;
                            }
                        } else {
                            for (j, d) in dst.iter_mut().enumerate() {
                                *d += wv * row[start as usize + j * stride];
                            }
                        }
                    }
                }
            }
        }
        if let Some(bias) = bias {
            let bv = bias.data()[oc];
            for a in acc.iter_mut() {
                *a += bv;
            }
        }
    });
    Tensor::new([n, out_c, oh, ow], out)
}

/// Space-to-depth: `(n, c, h, w) → (n, c·r², h/r, w/r)`.
///
/// Output channel `c·r² + dy·r + dx` holds input pixel `(y·r + dy, x·r + dx)`.
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let [n, c, h, w] = input.shape;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::config(format!(
            "pixel_unshuffle: extent {h}x{w} not divisible by factor {r}"
        )));
    }
    let (oh, ow) = (h / r, w / r);
    Ok(Tensor::from_fn([n, c * r * r, oh, ow], |b, oc, y, x| {
        let ch = oc / (r * r);
        let dy = (oc % (r * r)) / r;
        let dx = oc % r;
        input.get(b, ch, y * r + dy, x * r + dx)
    }))
}

/// Depth-to-space, the exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let [n, c, h, w] = input.shape;
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::config(format!(
            "pixel_shuffle: {c} channels not divisible by factor² = {}",
            r * r
        )));
    }
    Ok(Tensor::from_fn([n, c / (r * r), h * r, w * r], |b, ch, y, x| {
        let (dy, dx) = (y % r, x % r);
        input.get(b, ch * r * r + dy * r + dx, y / r, x / r)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    GeluTanh,
    Silu,
    Relu,
    Tanh,
    Sigmoid,
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

#[inline]
pub(crate) fn sigmoid64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Activation {
    /// Scalar evaluation. Uses `libm` so results do not depend on the host C library.
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        let v = x as f64;
        let r = match self {
            Activation::GeluTanh => 0.5 * v * (1.0 + libm::tanh(SQRT_2_OVER_PI * (v + 0.044715 * v * v * v))),
            Activation::Silu => v * sigmoid64(v),
            Activation::Relu => v.max(0.0),
            Activation::Tanh => libm::tanh(v),
            Activation::Sigmoid => sigmoid64(v),
        };
        r as f32
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|v| kind.apply(v))
}
