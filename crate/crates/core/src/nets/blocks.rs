//! Layers and residual blocks shared by every network.

use crate::error::Result;
use crate::nets::config::BlockKind;
use crate::nets::weights::{Init, ParamSource};
use crate::tensor::{activation, conv2d, pixel_shuffle, pixel_unshuffle, Activation, ConvSpec, Tensor};

/// A convolution with its parameters (`<name>.weight`, `<name>.bias`).
#[derive(Clone, Debug)]
pub struct Conv {
    pub spec: ConvSpec,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv {
    pub fn load(src: &mut dyn ParamSource, name: &str, spec: ConvSpec) -> Result<Self> {
        spec.validate()?;
        let ws = spec.weight_shape();
        let fan_in = ws[1] * ws[2] * ws[3];
        let weight = src.take(&format!("{name}.weight"), ws, Init::Weight { fan_in })?;
        let bias = src.take(&format!("{name}.bias"), [1, 1, 1, spec.out_channels], Init::Bias)?;
        Ok(Self { spec, weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, Some(&self.bias), &self.spec)
    }
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Layer {
    Conv(Conv),
    Act(Activation),
    Unshuffle(usize),
    Shuffle(usize),
    Block(Block),
}

impl Layer {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(c) => c.forward(x),
            Layer::Act(a) => Ok(activation(x, *a)),
            Layer::Unshuffle(r) => pixel_unshuffle(x, *r),
            Layer::Shuffle(r) => pixel_shuffle(x, *r),
            Layer::Block(b) => b.forward(x),
        }
    }
}

/// Layers applied in order.
#[derive(Clone, Debug, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn conv(&mut self, src: &mut dyn ParamSource, name: &str, spec: ConvSpec) -> Result<()> {
        self.layers.push(Layer::Conv(Conv::load(src, name, spec)?));
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.forward(&cur)?;
        }
        Ok(cur)
    }

    /// How far (in input pixels) information can travel through the stack.
    /// Together with the final pixel size this bounds the receptive field.
    ///
    /// Returns `(margin, pixel)` where `pixel` is the size of one output pixel
    /// in input pixels; start from `(0.0, 1.0)`.
    pub fn reach(&self, mut margin: f64, mut pixel: f64) -> (f64, f64) {
        for l in &self.layers {
            match l {
                Layer::Conv(c) => {
                    margin += c.spec.radius() as f64 * pixel;
                    pixel *= c.spec.stride as f64;
                }
                Layer::Act(_) => {}
                Layer::Unshuffle(r) => {
                    margin += (*r as f64 - 1.0) * pixel;
                    pixel *= *r as f64;
                }
                Layer::Shuffle(r) => pixel /= *r as f64,
                Layer::Block(b) => margin += b.radius() as f64 * pixel,
            }
        }
        (margin, pixel)
    }
}

/// A residual block of one of the configured kinds. All kinds preserve shape.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Block {
    /// `x + conv3(gelu(conv3(x)))`.
    Plain { a: Conv, b: Conv },
    /// Identity / 3×3 / 1×k / k×1 depthwise branches over a channel split,
    /// concatenated, then a pointwise GELU MLP (C → 2C → C), residual.
    Inception {
        branch: usize,
        square: Conv,
        wide: Conv,
        tall: Conv,
        fc1: Conv,
        fc2: Conv,
    },
    /// Pointwise expand to a gate and a value half of width E = 2C, depthwise
    /// k×k on the gate, `sigmoid(gate) · value`, pointwise project, residual.
    Gated { expand: Conv, dw: Conv, project: Conv },
}

impl Block {
    pub fn load(
        src: &mut dyn ParamSource,
        name: &str,
        kind: BlockKind,
        channels: usize,
        band_kernel: usize,
        gate_kernel: usize,
    ) -> Result<Self> {
        let c = channels;
        Ok(match kind {
            BlockKind::PlainConv => Block::Plain {
                a: Conv::load(src, &format!("{name}.conv1"), ConvSpec::same(c, c, 3))?,
                b: Conv::load(src, &format!("{name}.conv2"), ConvSpec::same(c, c, 3))?,
            },
            BlockKind::InceptionDw => {
                let bc = (c / 8).max(1);
                Block::Inception {
                    branch: bc,
                    square: Conv::load(src, &format!("{name}.dw_hw"), ConvSpec::depthwise(bc, 3, 3))?,
                    wide: Conv::load(src, &format!("{name}.dw_w"), ConvSpec::depthwise(bc, 1, band_kernel))?,
                    tall: Conv::load(src, &format!("{name}.dw_h"), ConvSpec::depthwise(bc, band_kernel, 1))?,
                    fc1: Conv::load(src, &format!("{name}.fc1"), ConvSpec::pointwise(c, 2 * c))?,
                    fc2: Conv::load(src, &format!("{name}.fc2"), ConvSpec::pointwise(2 * c, c))?,
                }
            }
            BlockKind::GatedCnn => {
                let e = 2 * c;
                Block::Gated {
                    expand: Conv::load(src, &format!("{name}.expand"), ConvSpec::pointwise(c, 2 * e))?,
                    dw: Conv::load(src, &format!("{name}.dw"), ConvSpec::depthwise(e, gate_kernel, gate_kernel))?,
                    project: Conv::load(src, &format!("{name}.project"), ConvSpec::pointwise(e, c))?,
                }
            }
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let delta = match self {
            Block::Plain { a, b } => b.forward(&activation(&a.forward(x)?, Activation::GeluTanh))?,
            Block::Inception {
                branch,
                square,
                wide,
                tall,
                fc1,
                fc2,
            } => {
                let c = x.channels();
                let id = c - 3 * branch;
                let keep = x.narrow_channels(0, id)?;
                let hw = square.forward(&x.narrow_channels(id, *branch)?)?;
                let w = wide.forward(&x.narrow_channels(id + branch, *branch)?)?;
                let h = tall.forward(&x.narrow_channels(id + 2 * branch, *branch)?)?;
                let mixed = Tensor::concat_channels(&[&keep, &hw, &w, &h])?;
                fc2.forward(&activation(&fc1.forward(&mixed)?, Activation::GeluTanh))?
            }
            Block::Gated { expand, dw, project } => {
                let e = dw.spec.in_channels;
                let both = expand.forward(x)?;
                let gate = dw.forward(&both.narrow_channels(0, e)?)?;
                let value = both.narrow_channels(e, e)?;
                let gated = gate.zip_map(&value, |g, v| Activation::Sigmoid.apply(g) * v)?;
                project.forward(&gated)?
            }
        };
        x.add(&delta)
    }

    /// Receptive radius in pixels at the block's own resolution.
    pub fn radius(&self) -> usize {
        match self {
            Block::Plain { a, b } => a.spec.radius() + b.spec.radius(),
            Block::Inception { square, wide, tall, .. } => {
                square.spec.radius().max(wide.spec.radius()).max(tall.spec.radius())
            }
            Block::Gated { dw, .. } => dw.spec.radius(),
        }
    }
}
