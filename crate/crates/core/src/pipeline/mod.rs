//! Encode/decode orchestration and the decoder-side stages.

pub mod codec;
pub mod color;
pub mod denoise;
pub mod image_io;
pub mod schedule;
pub mod tile;

pub use codec::{
    padded_extent, Codec, DecodeOptions, Decoded, EncodeOptions, Encoded, LatentSource, PixelDecoder,
    PixelTiling, PredictorKind, ShapeChain, SymbolTap, LATENT_SCALE, PAD_MULTIPLE,
};
pub use color::{color_fix, color_fix_raw, color_stats, quantize_stat, ColorStats};
pub use denoise::{one_step_denoise, EpsilonPredictor, ToyPredictor, ZeroPredictor};
pub use schedule::NoiseSchedule;
pub use tile::{tile_process, TileConfig};
