//! End-to-end encode and decode.

use std::sync::Arc;

use crate::container::{Container, Header, Streams};
use crate::entropy::context::{
    apply_lrp, decode_hyper, encode_hyper, hyper_bits, predict_params, quantize_hyper, GaussianParams,
    RateEstimate,
};
use crate::entropy::gaussian::{centered_bits, decode_centered, encode_centered};
use crate::entropy::quant::{dequantize, merge, partition, symbol};
use crate::error::{Error, Result};
use crate::nets::{ModelId, Networks, WeightStore, GROUPS};
use crate::pipeline::color::{color_fix, color_stats};
use crate::pipeline::denoise::{one_step_denoise, EpsilonPredictor, ToyPredictor, ZeroPredictor};
use crate::pipeline::schedule::{NoiseSchedule, DEFAULT_TIMESTEP};
use crate::pipeline::tile::{tile_process, TileConfig};
use crate::tensor::Tensor;

/// Images are padded to a multiple of the deepest stride.
pub const PAD_MULTIPLE: usize = 256;
/// Resolution of the diffusion latent relative to the image.
pub const LATENT_SCALE: usize = 8;

/// Produces a latent at a fixed fraction of the image resolution.
pub trait LatentSource: Send + Sync {
    fn encode(&self, image: &Tensor) -> Result<Tensor>;
}

/// Maps a diffusion latent back to RGB pixels at 8× its resolution.
pub trait PixelDecoder: Send + Sync {
    fn decode(&self, latent: &Tensor) -> Result<Tensor>;

    /// Receptive margin in latent pixels.
    fn margin(&self) -> usize;
}

/// Which network of the store backs a built-in component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Source8,
    Source16,
    Pixel,
}

/// Built-in sources and pixel decoder loaded from the weight store.
#[derive(Clone, Debug)]
pub struct StoredNet {
    nets: Arc<Networks>,
    part: Part,
}

impl LatentSource for StoredNet {
    fn encode(&self, image: &Tensor) -> Result<Tensor> {
        match self.part {
            Part::Source8 => self.nets.source8.forward(image),
            Part::Source16 => self.nets.source16.forward(image),
            Part::Pixel => Err(Error::Contract("the pixel decoder is not a latent source".into())),
        }
    }
}

impl PixelDecoder for StoredNet {
    fn decode(&self, latent: &Tensor) -> Result<Tensor> {
        self.nets.pixel.forward(latent)
    }

    fn margin(&self) -> usize {
        self.nets.pixel.reach(0.0, 1.0).0.ceil() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PredictorKind {
    #[default]
    Zero,
    Toy,
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PredictorKind::Zero),
            "toy" => Ok(PredictorKind::Toy),
            other => Err(Error::config(format!("unknown predictor `{other}` (expected zero or toy)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeOptions {
    pub color_fix: bool,
    pub timestep: usize,
    /// Marks the container for tiled decoding; encoding itself never tiles.
    pub tiled: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            color_fix: true,
            timestep: DEFAULT_TIMESTEP,
            tiled: false,
        }
    }
}

/// Tile geometry in image pixels. `tile` and `overlap` are converted to
/// diffusion-latent pixels (÷8) for the tiled stages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelTiling {
    pub tile: usize,
    pub overlap: usize,
}

impl Default for PixelTiling {
    fn default() -> Self {
        Self {
            tile: 1024,
            overlap: 512,
        }
    }
}

impl PixelTiling {
    pub fn latent(&self) -> Result<TileConfig> {
        if self.tile == 0 || !self.tile.is_multiple_of(PAD_MULTIPLE) {
            return Err(Error::config(format!("tile {} must be a positive multiple of {PAD_MULTIPLE}", self.tile)));
        }
        if !self.overlap.is_multiple_of(2 * LATENT_SCALE) {
            return Err(Error::config(format!(
                "overlap {} must be an even number of latent pixels (a multiple of {})",
                self.overlap,
                2 * LATENT_SCALE
            )));
        }
        Ok(TileConfig::new(self.tile / LATENT_SCALE, self.overlap / LATENT_SCALE))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOptions {
    pub predictor: PredictorKind,
    /// Forces tiling on (with this geometry) regardless of the header flag.
    pub tiling: Option<PixelTiling>,
    pub schedule: NoiseSchedule,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            predictor: PredictorKind::Zero,
            tiling: None,
            schedule: NoiseSchedule::default(),
        }
    }
}

/// The integer symbols of every stream, in coding order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SymbolTap {
    pub z: Vec<i32>,
    pub groups: [Vec<i32>; GROUPS],
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub container: Container,
    pub symbols: SymbolTap,
    pub rate: RateEstimate,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    /// Final reconstruction (color-fixed when the container carries statistics).
    pub image: Tensor,
    /// Reconstruction before the color fix.
    pub raw: Tensor,
    pub symbols: SymbolTap,
}

/// Latent shapes implied by an image size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShapeChain {
    pub padded: (usize, usize),
    pub latent: [usize; 4],
    pub intermediate: [usize; 4],
    pub code: [usize; 4],
    pub hyper: [usize; 4],
}

pub fn padded_extent(v: usize) -> usize {
    v.div_ceil(PAD_MULTIPLE).max(1) * PAD_MULTIPLE
}

pub struct Codec {
    nets: Arc<Networks>,
    model_id: ModelId,
    source8: Box<dyn LatentSource>,
    source16: Box<dyn LatentSource>,
    pixel: Box<dyn PixelDecoder>,
}

impl Codec {
    pub fn new(store: &WeightStore) -> Result<Self> {
        let nets = Arc::new(Networks::from_store(store)?);
        let stored = |part| StoredNet {
            nets: Arc::clone(&nets),
            part,
        };
        Ok(Self {
            source8: Box::new(stored(Part::Source8)),
            source16: Box::new(stored(Part::Source16)),
            pixel: Box::new(stored(Part::Pixel)),
            model_id: store.model_id(),
            nets,
        })
    }

    pub fn with_sources(mut self, source8: Box<dyn LatentSource>, source16: Box<dyn LatentSource>) -> Self {
        self.source8 = source8;
        self.source16 = source16;
        self
    }

    pub fn with_pixel_decoder(mut self, pixel: Box<dyn PixelDecoder>) -> Self {
        self.pixel = pixel;
        self
    }

    pub fn networks(&self) -> &Networks {
        &self.nets
    }

    pub fn model_id(&self) -> ModelId {
        self.model_id
    }

    pub fn shape_chain(&self, height: usize, width: usize) -> ShapeChain {
        let cfg = &self.nets.config;
        let (h, w) = (padded_extent(height), padded_extent(width));
        ShapeChain {
            padded: (h, w),
            latent: [1, cfg.diffusion_channels, h / 8, w / 8],
            intermediate: [1, cfg.latent_channels, h / 16, w / 16],
            code: [1, cfg.code_channels, h / 64, w / 64],
            hyper: [1, cfg.hyper_channels, h / 256, w / 256],
        }
    }

    pub fn predictor(&self, kind: PredictorKind) -> Box<dyn EpsilonPredictor> {
        match kind {
            PredictorKind::Zero => Box::new(ZeroPredictor),
            PredictorKind::Toy => Box::new(ToyPredictor::new(Arc::clone(&self.nets))),
        }
    }

    /// Runs both latent sources on a padded image.
    pub fn sources(&self, padded: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((self.source8.encode(padded)?, self.source16.encode(padded)?))
    }

    /// `y = g_a(l)` from the two source latents.
    pub fn analyze(&self, src8: &Tensor, src16: &Tensor) -> Result<Tensor> {
        let l = self.nets.build_intermediate_latent(src8, src16)?;
        self.nets.analysis(&l)
    }

    /// The shared autoregressive loop. `code` receives the group index and
    /// its parameters and returns that group's symbols (encoding computes and
    /// writes them, decoding reads them).
    fn run_groups(
        &self,
        phi: &Tensor,
        y_shape: [usize; 4],
        mut code: impl FnMut(usize, &GaussianParams) -> Result<Vec<i32>>,
    ) -> Result<(Tensor, [Vec<i32>; GROUPS])> {
        let mut decoded: Vec<Tensor> = Vec::with_capacity(GROUPS);
        let mut symbols: [Vec<i32>; GROUPS] = Default::default();
        for step in 1..=GROUPS {
            let params = predict_params(&self.nets, phi, y_shape, &decoded, step)?;
            let syms = code(step - 1, &params)?;
            decoded.push(dequantize(&syms, &params.mu)?);
            let refined = apply_lrp(&self.nets, y_shape, &decoded, &params.mu, step)?;
            decoded[step - 1] = refined;
            symbols[step - 1] = syms;
        }
        let groups: [Tensor; GROUPS] = decoded
            .try_into()
            .map_err(|_| Error::Sequencing("group count changed during coding".into()))?;
        Ok((merge(&groups)?, symbols))
    }

    /// Codes `y`: the hyper latent first, then the four groups.
    pub fn entropy_encode(&self, y: &Tensor) -> Result<(Streams, SymbolTap, RateEstimate, Tensor)> {
        let z = self.nets.hyper_analysis(y)?;
        let prior = &self.nets.prior;
        let (z_syms, z_hat) = quantize_hyper(prior, &z)?;
        let z_stream = encode_hyper(prior, z.shape(), &z_syms)?;
        let mut rate = RateEstimate {
            z_bits: hyper_bits(prior, z.shape(), &z_syms)?,
            ..Default::default()
        };
        let phi = self.nets.hyper_synthesis(&z_hat)?;
        let y_groups = partition(y)?;
        let mut streams: [Vec<u8>; GROUPS] = Default::default();
        let (y_hat, symbols) = self.run_groups(&phi, y.shape(), |g, p| {
            let syms: Vec<i32> = y_groups[g]
                .data()
                .iter()
                .zip(p.mu.data())
                .map(|(&v, &m)| symbol(v - m))
                .collect();
            streams[g] = encode_centered(&syms, p.sigma.data())?;
            rate.group_bits[g] = centered_bits(&syms, p.sigma.data());
            Ok(syms)
        })?;
        Ok((
            Streams { z: z_stream, groups: streams },
            SymbolTap { z: z_syms, groups: symbols },
            rate,
            y_hat,
        ))
    }

    /// Recovers `ŷ` (LRP-refined) from the streams.
    pub fn entropy_decode(&self, streams: &Streams, chain: &ShapeChain) -> Result<(Tensor, SymbolTap)> {
        let prior = &self.nets.prior;
        let (z_syms, z_hat) = decode_hyper(prior, chain.hyper, &streams.z)?;
        let phi = self.nets.hyper_synthesis(&z_hat)?;
        let (y_hat, symbols) = self.run_groups(&phi, chain.code, |g, p| {
            decode_centered(&streams.groups[g], p.sigma.data())
                .map_err(|e| Error::decode(format!("group {} stream: {e}", g + 1)))
        })?;
        Ok((y_hat, SymbolTap { z: z_syms, groups: symbols }))
    }

    pub fn encode(&self, image: &Tensor, opts: &EncodeOptions) -> Result<Encoded> {
        let [n, c, h, w] = image.shape();
        if n != 1 || c != 3 || h == 0 || w == 0 {
            return Err(Error::config(format!("expected a (1, 3, h, w) image with h, w ≥ 1, got {:?}", image.shape())));
        }
        let timestep = u16::try_from(opts.timestep)
            .map_err(|_| Error::config(format!("timestep {} does not fit the header", opts.timestep)))?;
        let width = u32::try_from(w).map_err(|_| Error::config("image too wide"))?;
        let height = u32::try_from(h).map_err(|_| Error::config("image too tall"))?;
        let (ph, pw) = (padded_extent(h), padded_extent(w));
        let padded = image.pad_replicate(ph, pw)?;
        let (s8, s16) = self.sources(&padded)?;
        let y = self.analyze(&s8, &s16)?;
        let (streams, symbols, rate, _) = self.entropy_encode(&y)?;
        let container = Container {
            header: Header {
                width,
                height,
                model_id: self.model_id,
                timestep,
                tiled: opts.tiled,
            },
            color: opts.color_fix.then(|| color_stats(image).quantize()),
            streams,
        };
        Ok(Encoded {
            bytes: container.to_bytes()?,
            container,
            symbols,
            rate,
        })
    }

    pub fn synthesize(&self, y_hat: &Tensor) -> Result<Tensor> {
        self.nets.synthesis(y_hat)
    }

    pub fn aux(&self, y_hat: &Tensor) -> Result<Tensor> {
        self.nets.aux_decode(y_hat)
    }

    /// Runs the pixel decoder alone on a diffusion latent.
    pub fn pixel_decode(&self, latent: &Tensor) -> Result<Tensor> {
        self.pixel.decode(latent)
    }

    /// `D(denoise(l_T) + residual)` on the whole latent.
    pub fn render(
        &self,
        l_t: &Tensor,
        residual: &Tensor,
        schedule: &NoiseSchedule,
        timestep: usize,
        predictor: &dyn EpsilonPredictor,
    ) -> Result<Tensor> {
        let l0 = one_step_denoise(l_t, schedule, timestep, predictor)?;
        self.pixel_decode(&l0.add(residual)?)
    }

    /// [`Self::render`] tile by tile over the diffusion latent.
    pub fn render_tiled(
        &self,
        l_t: &Tensor,
        residual: &Tensor,
        schedule: &NoiseSchedule,
        timestep: usize,
        predictor: &dyn EpsilonPredictor,
        tiling: &PixelTiling,
    ) -> Result<Tensor> {
        let cfg = tiling.latent()?;
        let cd = l_t.channels();
        let both = Tensor::concat_channels(&[l_t, residual])?;
        let margin = predictor.margin() + self.pixel.margin();
        tile_process(&both, &cfg, margin, LATENT_SCALE, |win| {
            let lt = win.narrow_channels(0, cd)?;
            let res = win.narrow_channels(cd, cd)?;
            self.render(&lt, &res, schedule, timestep, predictor)
        })
    }

    pub fn decode(&self, bytes: &[u8], opts: &DecodeOptions) -> Result<Decoded> {
        let container = Container::from_bytes(bytes)?;
        self.decode_container(&container, opts)
    }

    pub fn decode_container(&self, container: &Container, opts: &DecodeOptions) -> Result<Decoded> {
        let h = &container.header;
        if h.model_id != self.model_id {
            return Err(Error::ModelMismatch {
                container: h.model_id.to_string(),
                weights: self.model_id.to_string(),
            });
        }
        let chain = self.shape_chain(h.height as usize, h.width as usize);
        let (y_hat, symbols) = self.entropy_decode(&container.streams, &chain)?;
        let l_t = self.synthesize(&y_hat)?;
        let residual = self.aux(&y_hat)?;
        let predictor = self.predictor(opts.predictor);
        let t = h.timestep as usize;
        let tiling = opts.tiling.or(h.tiled.then(PixelTiling::default));
        let pixels = match tiling {
            Some(tiling) => self.render_tiled(&l_t, &residual, &opts.schedule, t, predictor.as_ref(), &tiling)?,
            None => self.render(&l_t, &residual, &opts.schedule, t, predictor.as_ref())?,
        };
        let (ph, pw) = chain.padded;
        pixels.expect_shape([1, 3, ph, pw], "pixel decoder output")?;
        let raw = pixels.crop(0, 0, h.height as usize, h.width as usize)?;
        let image = match &container.color {
            Some(p) => color_fix(&raw, p)?,
            None => raw.clone(),
        };
        Ok(Decoded { image, raw, symbols })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::TransformConfig;

    fn codec() -> Codec {
        Codec::new(&WeightStore::random(&TransformConfig::tiny(), 5).unwrap()).unwrap()
    }

    fn image(h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
            (((c * 37 + y * 11 + x * 5) % 41) as f32 / 40.0 + 0.1 * ((y as f32) * 0.05).sin()).clamp(0.0, 1.0)
        })
    }

    #[test]
    fn padded_extents() {
        assert_eq!(padded_extent(1), 256);
        assert_eq!(padded_extent(256), 256);
        assert_eq!(padded_extent(257), 512);
    }

    #[test]
    fn roundtrip_recovers_symbols_and_extent() {
        let c = codec();
        let x = image(100, 300);
        let enc = c.encode(&x, &EncodeOptions::default()).unwrap();
        let dec = c.decode(&enc.bytes, &DecodeOptions::default()).unwrap();
        assert_eq!(dec.symbols, enc.symbols);
        assert_eq!(dec.image.shape(), [1, 3, 100, 300]);
        assert!(dec.image.is_finite());
        assert_eq!(enc.symbols.groups.iter().map(Vec::len).sum::<usize>(), 8 * 4 * 8);
        assert_eq!(enc.symbols.z.len(), 4 * 2);
    }

    #[test]
    fn model_mismatch_is_reported() {
        let a = codec();
        let b = Codec::new(&WeightStore::random(&TransformConfig::tiny(), 6).unwrap()).unwrap();
        let enc = a.encode(&image(16, 16), &EncodeOptions::default()).unwrap();
        assert!(matches!(b.decode(&enc.bytes, &DecodeOptions::default()), Err(Error::ModelMismatch { .. })));
    }

    #[test]
    fn tiled_decode_matches_untiled() {
        let c = codec();
        let x = image(512, 768);
        let enc = c.encode(&x, &EncodeOptions::default()).unwrap();
        let plain = c.decode(&enc.bytes, &DecodeOptions::default()).unwrap();
        let opts = DecodeOptions {
            tiling: Some(PixelTiling { tile: 256, overlap: 64 }),
            predictor: PredictorKind::Zero,
            ..Default::default()
        };
        let tiled = c.decode(&enc.bytes, &opts).unwrap();
        assert!(tiled.raw.max_abs_diff(&plain.raw) <= 1e-5);
    }

    #[test]
    fn corrupt_stream_is_a_decode_error() {
        let c = codec();
        let enc = c.encode(&image(64, 64), &EncodeOptions::default()).unwrap();
        let mut cont = enc.container.clone();
        cont.streams.groups[2].pop();
        assert!(matches!(c.decode_container(&cont, &DecodeOptions::default()), Err(Error::Decode(_))));
    }
}
