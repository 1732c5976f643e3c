//! The codec's networks, assembled from a [`TransformConfig`] and a parameter source.
//!
//! Parameter names are dot-separated paths rooted at one of `src8`, `src16`,
//! `adapt8`, `adapt16`, `g_a`, `h_a`, `h_s`, `g_s`, `aux`, `ctx`, `lrp1`..`lrp4`,
//! `fp`, `pix`, `eps`.

use crate::error::{Error, Result};
use crate::nets::blocks::{Block, Layer, Sequential};
use crate::nets::config::{StageConfig, TransformConfig};
use crate::nets::weights::{Init, ParamSource, StoreSource, WeightStore};
use crate::tensor::{Activation, ConvSpec, Tensor};

pub const GROUPS: usize = 4;
pub const SIGMA_MIN: f32 = 0.04;
pub const SIGMA_MAX: f32 = 64.0;

const GELU: Layer = Layer::Act(Activation::GeluTanh);

/// Halve resolution: space-to-depth by 2, then a pointwise projection.
fn down(seq: &mut Sequential, src: &mut dyn ParamSource, name: &str, cin: usize, cout: usize) -> Result<()> {
    seq.push(Layer::Unshuffle(2));
    seq.conv(src, name, ConvSpec::pointwise(4 * cin, cout))
}

/// Double resolution: pointwise projection to 4·cout, then depth-to-space by 2.
fn up(seq: &mut Sequential, src: &mut dyn ParamSource, name: &str, cin: usize, cout: usize) -> Result<()> {
    seq.conv(src, name, ConvSpec::pointwise(cin, 4 * cout))?;
    seq.push(Layer::Shuffle(2));
    Ok(())
}

fn blocks(
    seq: &mut Sequential,
    src: &mut dyn ParamSource,
    prefix: &str,
    st: &StageConfig,
    cfg: &TransformConfig,
) -> Result<()> {
    for b in 0..st.blocks {
        seq.push(Layer::Block(Block::load(
            src,
            &format!("{prefix}.block{b}"),
            st.kind,
            st.channels,
            cfg.band_kernel,
            cfg.gate_kernel,
        )?));
    }
    Ok(())
}

/// `g_s` and the auxiliary decoder share this shape: three ×2 upsampling
/// stages and a 3×3 head into the diffusion-latent channels.
fn synthesis(src: &mut dyn ParamSource, root: &str, cfg: &TransformConfig) -> Result<Sequential> {
    let mut s = Sequential::default();
    let mut prev = cfg.code_channels;
    for (i, st) in cfg.synthesis.iter().enumerate() {
        up(&mut s, src, &format!("{root}.stage{i}.up"), prev, st.channels)?;
        blocks(&mut s, src, &format!("{root}.stage{i}"), st, cfg)?;
        prev = st.channels;
    }
    s.conv(src, &format!("{root}.head"), ConvSpec::same(prev, cfg.diffusion_channels, 3))?;
    Ok(s)
}

/// Shared trunk plus one private adapter per group, predicting `(μ, σ)` for
/// every position of the code latent.
#[derive(Clone, Debug)]
pub struct ContextModel {
    pub shared: Sequential,
    pub adapters: Vec<Sequential>,
    code_channels: usize,
}

impl ContextModel {
    /// `visible` is the code latent with every not-yet-decoded position zeroed.
    /// Step is 0-based.
    pub fn predict(&self, phi: &Tensor, visible: &Tensor, step: usize) -> Result<(Tensor, Tensor)> {
        let adapter = self
            .adapters
            .get(step)
            .ok_or_else(|| Error::Sequencing(format!("no context adapter for step {}", step + 1)))?;
        let feats = self.shared.forward(&Tensor::concat_channels(&[phi, visible])?)?;
        let raw = adapter.forward(&feats)?;
        let c = self.code_channels;
        let mu = raw.narrow_channels(0, c)?;
        let sigma = raw.narrow_channels(c, c)?.map(|v| {
            let sp = if v > 20.0 { v as f64 } else { libm::log1p(libm::exp(v as f64)) };
            (sp as f32).clamp(SIGMA_MIN, SIGMA_MAX)
        });
        Ok((mu, sigma))
    }
}

/// Per-channel location and scale for the hyper latent.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedPrior {
    pub loc: Vec<f32>,
    pub scale: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct Networks {
    pub config: TransformConfig,
    pub source8: Sequential,
    pub source16: Sequential,
    pub adapt8: Sequential,
    pub adapt16: Sequential,
    pub g_a: Sequential,
    pub h_a: Sequential,
    pub h_s: Sequential,
    pub g_s: Sequential,
    pub aux: Sequential,
    pub context: ContextModel,
    pub lrp: Vec<Sequential>,
    pub prior: FactorizedPrior,
    pub pixel: Sequential,
    pub predictor: Sequential,
}

impl Networks {
    pub fn build(cfg: &TransformConfig, src: &mut dyn ParamSource) -> Result<Self> {
        cfg.validate()?;
        let cy = cfg.code_channels;

        let mut source8 = Sequential::default();
        source8.push(Layer::Unshuffle(4));
        source8.conv(src, "src8.conv1", ConvSpec::same(48, cfg.source_hidden, 3).with_stride(2))?;
        source8.push(GELU);
        source8.conv(src, "src8.conv2", ConvSpec::pointwise(cfg.source_hidden, cfg.source8_channels))?;

        let mut source16 = Sequential::default();
        source16.push(Layer::Unshuffle(8));
        source16.conv(src, "src16.conv1", ConvSpec::pointwise(192, cfg.source_hidden))?;
        source16.push(GELU);
        source16.push(Layer::Unshuffle(2));
        source16.conv(src, "src16.conv2", ConvSpec::pointwise(4 * cfg.source_hidden, cfg.source16_channels))?;

        let half = cfg.latent_channels / 2;
        let mut adapt8 = Sequential::default();
        down(&mut adapt8, src, "adapt8.down", cfg.source8_channels, half)?;
        let mut adapt16 = Sequential::default();
        adapt16.conv(src, "adapt16.conv", ConvSpec::same(cfg.source16_channels, half, 3))?;

        let mut g_a = Sequential::default();
        let mut prev = cfg.latent_channels;
        for (i, st) in cfg.analysis.iter().enumerate() {
            down(&mut g_a, src, &format!("g_a.stage{i}.down"), prev, st.channels)?;
            blocks(&mut g_a, src, &format!("g_a.stage{i}"), st, cfg)?;
            prev = st.channels;
        }

        let hh = cfg.hyper_hidden;
        let mut h_a = Sequential::default();
        h_a.conv(src, "h_a.conv", ConvSpec::same(cy, hh, 3))?;
        h_a.push(GELU);
        down(&mut h_a, src, "h_a.down1", hh, hh)?;
        h_a.push(GELU);
        down(&mut h_a, src, "h_a.down2", hh, cfg.hyper_channels)?;

        let mut h_s = Sequential::default();
        up(&mut h_s, src, "h_s.up1", cfg.hyper_channels, hh)?;
        h_s.push(GELU);
        up(&mut h_s, src, "h_s.up2", hh, hh)?;
        h_s.push(GELU);
        h_s.conv(src, "h_s.conv", ConvSpec::same(hh, cfg.hyper_param_channels, 3))?;

        let g_s = synthesis(src, "g_s", cfg)?;
        let aux = synthesis(src, "aux", cfg)?;

        let ctx = cfg.context_channels;
        let mut shared = Sequential::default();
        shared.conv(src, "ctx.shared.conv1", ConvSpec::same(cfg.hyper_param_channels + cy, ctx, 3))?;
        shared.push(GELU);
        shared.conv(src, "ctx.shared.conv2", ConvSpec::same(ctx, ctx, 3))?;
        shared.push(GELU);
        let mut adapters = Vec::with_capacity(GROUPS);
        for i in 1..=GROUPS {
            let mut a = Sequential::default();
            a.conv(src, &format!("ctx.adapter{i}"), ConvSpec::pointwise(ctx, 2 * cy))?;
            adapters.push(a);
        }
        let context = ContextModel {
            shared,
            adapters,
            code_channels: cy,
        };

        let mut lrp = Vec::with_capacity(GROUPS);
        for i in 1..=GROUPS {
            let mut s = Sequential::default();
            s.conv(src, &format!("lrp{i}.conv1"), ConvSpec::same(2 * cy, cfg.lrp_channels, 3))?;
            s.push(GELU);
            s.conv(src, &format!("lrp{i}.conv2"), ConvSpec::same(cfg.lrp_channels, cy, 3))?;
            lrp.push(s);
        }

        let cz = cfg.hyper_channels;
        let prior = FactorizedPrior {
            loc: src.take("fp.loc", [1, 1, 1, cz], Init::Const(0.0))?.into_data(),
            scale: src.take("fp.scale", [1, 1, 1, cz], Init::Const(1.0))?.into_data(),
        };

        let mut pixel = Sequential::default();
        pixel.conv(src, "pix.conv1", ConvSpec::same(cfg.diffusion_channels, cfg.pixel_hidden, 3))?;
        pixel.push(GELU);
        pixel.conv(src, "pix.conv2", ConvSpec::pointwise(cfg.pixel_hidden, 192))?;
        pixel.push(Layer::Shuffle(8));
        pixel.push(Layer::Act(Activation::Sigmoid));

        let mut predictor = Sequential::default();
        let cd = cfg.diffusion_channels;
        predictor.conv(src, "eps.conv1", ConvSpec::same(cd + 1, cfg.predictor_hidden, 3))?;
        predictor.push(GELU);
        predictor.conv(src, "eps.conv2", ConvSpec::same(cfg.predictor_hidden, cd, 3))?;

        Ok(Self {
            config: cfg.clone(),
            source8,
            source16,
            adapt8,
            adapt16,
            g_a,
            h_a,
            h_s,
            g_s,
            aux,
            context,
            lrp,
            prior,
            pixel,
            predictor,
        })
    }

    /// Builds every network from a loaded store, using the store's own config.
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let cfg = store.config()?;
        let mut src = StoreSource::new(store);
        let nets = Self::build(&cfg, &mut src)?;
        let unused = src.unused();
        if !unused.is_empty() {
            log::warn!("{} stored parameters are not used: {}", unused.len(), unused.join(", "));
        }
        Ok(nets)
    }

    /// `l = concat[down(src8), conv3×3(src16)]` at 1/16 resolution.
    pub fn build_intermediate_latent(&self, src8: &Tensor, src16: &Tensor) -> Result<Tensor> {
        let a = self.adapt8.forward(src8)?;
        let b = self.adapt16.forward(src16)?;
        if a.height() != b.height() || a.width() != b.width() || a.batch() != b.batch() {
            return Err(Error::config(format!(
                "adapter outputs disagree on resolution: {:?} from the 1/8 source, {:?} from the 1/16 source",
                a.shape(),
                b.shape()
            )));
        }
        Tensor::concat_channels(&[&a, &b])
    }

    pub fn analysis(&self, l: &Tensor) -> Result<Tensor> {
        self.g_a.forward(l)
    }

    pub fn hyper_analysis(&self, y: &Tensor) -> Result<Tensor> {
        self.h_a.forward(y)
    }

    pub fn hyper_synthesis(&self, z_hat: &Tensor) -> Result<Tensor> {
        self.h_s.forward(z_hat)
    }

    pub fn synthesis(&self, y_hat: &Tensor) -> Result<Tensor> {
        self.g_s.forward(y_hat)
    }

    pub fn aux_decode(&self, y_hat: &Tensor) -> Result<Tensor> {
        self.aux.forward(y_hat)
    }

    /// Bounded refinement `0.5·tanh(net(concat[μ, ŷ]))` for a 0-based step.
    pub fn lrp_delta(&self, step: usize, mu: &Tensor, visible: &Tensor) -> Result<Tensor> {
        let net = self
            .lrp
            .get(step)
            .ok_or_else(|| Error::Sequencing(format!("no LRP network for step {}", step + 1)))?;
        let raw = net.forward(&Tensor::concat_channels(&[mu, visible])?)?;
        Ok(raw.map(|v| 0.5 * Activation::Tanh.apply(v)))
    }

    /// Receptive margin of `g_s` in code-latent pixels.
    pub fn synthesis_margin(&self) -> usize {
        self.g_s.reach(0.0, 1.0).0.ceil() as usize
    }

    /// Receptive margin of the auxiliary decoder in code-latent pixels.
    pub fn aux_margin(&self) -> usize {
        self.aux.reach(0.0, 1.0).0.ceil() as usize
    }
}
