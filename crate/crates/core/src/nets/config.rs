use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KeyValues;

/// Residual block family used inside a transform stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// Parallel depthwise branches (square, wide band, tall band, identity)
    /// over a channel split, concatenated, then a pointwise MLP.
    InceptionDw,
    /// Pointwise expand into a gate and a value half, depthwise conv on the
    /// gate, `sigmoid(gate) · value`, pointwise project.
    GatedCnn,
    /// Two 3×3 convolutions with a GELU between them.
    PlainConv,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::InceptionDw => "inception-dw",
            BlockKind::GatedCnn => "gated-cnn",
            BlockKind::PlainConv => "plain-conv",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inception-dw" => Ok(BlockKind::InceptionDw),
            "gated-cnn" => Ok(BlockKind::GatedCnn),
            "plain-conv" => Ok(BlockKind::PlainConv),
            other => Err(Error::config(format!("unknown block kind `{other}`"))),
        }
    }
}

/// One resampling stage: a ×2 down/upsample into `channels`, then `blocks`
/// residual blocks of `kind`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageConfig {
    pub channels: usize,
    pub kind: BlockKind,
    pub blocks: usize,
}

impl fmt::Display for StageConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.channels, self.kind, self.blocks)
    }
}

impl FromStr for StageConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::config(format!(
                "stage `{s}`: expected channels:kind:blocks"
            )));
        }
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|e| Error::config(format!("stage `{s}`: {e}")))
        };
        Ok(StageConfig {
            channels: num(parts[0])?,
            kind: parts[1].parse()?,
            blocks: num(parts[2])?,
        })
    }
}

/// Shapes and depths of every network the codec loads.
///
/// The resolution chain is fixed: the primary latent source runs at 1/8 of the
/// image, the auxiliary source and the intermediate latent at 1/16, the code
/// latent at 1/64, the hyper latent at 1/256. Each analysis stage halves the
/// resolution and each synthesis stage doubles it, so there are exactly two
/// analysis stages (16 → 64) and three synthesis stages (64 → 8).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformConfig {
    /// Channels of the 1/8 primary latent source.
    pub source8_channels: usize,
    /// Channels of the 1/16 auxiliary latent source.
    pub source16_channels: usize,
    pub source_hidden: usize,
    /// Channels of the intermediate latent; split evenly between the two adapters.
    pub latent_channels: usize,
    pub code_channels: usize,
    pub hyper_channels: usize,
    pub hyper_hidden: usize,
    /// Channels of the hyperprior features that condition the context model.
    pub hyper_param_channels: usize,
    /// Channels of the diffusion latents.
    pub diffusion_channels: usize,
    pub analysis: Vec<StageConfig>,
    /// Used by both the synthesis transform and the auxiliary decoder.
    pub synthesis: Vec<StageConfig>,
    pub context_channels: usize,
    pub lrp_channels: usize,
    pub band_kernel: usize,
    pub gate_kernel: usize,
    pub pixel_hidden: usize,
    pub predictor_hidden: usize,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            source8_channels: 4,
            source16_channels: 192,
            source_hidden: 32,
            latent_channels: 128,
            code_channels: 320,
            hyper_channels: 160,
            hyper_hidden: 224,
            hyper_param_channels: 320,
            diffusion_channels: 4,
            analysis: vec![
                StageConfig {
                    channels: 192,
                    kind: BlockKind::InceptionDw,
                    blocks: 1,
                },
                StageConfig {
                    channels: 320,
                    kind: BlockKind::GatedCnn,
                    blocks: 1,
                },
            ],
            synthesis: vec![
                StageConfig {
                    channels: 192,
                    kind: BlockKind::GatedCnn,
                    blocks: 1,
                },
                StageConfig {
                    channels: 128,
                    kind: BlockKind::InceptionDw,
                    blocks: 1,
                },
                StageConfig {
                    channels: 64,
                    kind: BlockKind::PlainConv,
                    blocks: 1,
                },
            ],
            context_channels: 192,
            lrp_channels: 64,
            band_kernel: 11,
            gate_kernel: 7,
            pixel_hidden: 64,
            predictor_hidden: 32,
        }
    }
}

pub const ANALYSIS_STAGES: usize = 2;
pub const SYNTHESIS_STAGES: usize = 3;

fn stages_to_string(stages: &[StageConfig]) -> String {
    stages
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_stages(s: &str) -> Result<Vec<StageConfig>> {
    s.split(',').map(str::parse).collect()
}

impl TransformConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("source8_channels", self.source8_channels),
            ("source16_channels", self.source16_channels),
            ("source_hidden", self.source_hidden),
            ("latent_channels", self.latent_channels),
            ("code_channels", self.code_channels),
            ("hyper_channels", self.hyper_channels),
            ("hyper_hidden", self.hyper_hidden),
            ("hyper_param_channels", self.hyper_param_channels),
            ("diffusion_channels", self.diffusion_channels),
            ("context_channels", self.context_channels),
            ("lrp_channels", self.lrp_channels),
            ("pixel_hidden", self.pixel_hidden),
            ("predictor_hidden", self.predictor_hidden),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{k} must be positive")));
            }
        }
        if !self.latent_channels.is_multiple_of(2) {
            return Err(Error::config(format!(
                "latent_channels = {} must be even (split between two adapters)",
                self.latent_channels
            )));
        }
        if self.analysis.len() != ANALYSIS_STAGES {
            return Err(Error::config(format!(
                "analysis needs exactly {ANALYSIS_STAGES} ×2 stages (1/16 → 1/64), got {}",
                self.analysis.len()
            )));
        }
        if self.synthesis.len() != SYNTHESIS_STAGES {
            return Err(Error::config(format!(
                "synthesis needs exactly {SYNTHESIS_STAGES} ×2 stages (1/64 → 1/8), got {}",
                self.synthesis.len()
            )));
        }
        let last = self.analysis[ANALYSIS_STAGES - 1].channels;
        if last != self.code_channels {
            return Err(Error::config(format!(
                "last analysis stage has {last} channels but code_channels = {}",
                self.code_channels
            )));
        }
        for st in self.analysis.iter().chain(&self.synthesis) {
            if st.channels == 0 {
                return Err(Error::config("stage channels must be positive"));
            }
            if st.kind == BlockKind::InceptionDw && st.channels < 4 {
                return Err(Error::config("inception-dw stages need at least 4 channels"));
            }
        }
        for (k, v) in [("band_kernel", self.band_kernel), ("gate_kernel", self.gate_kernel)] {
            if v % 2 == 0 {
                return Err(Error::config(format!("{k} must be odd, got {v}")));
            }
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("source8_channels", self.source8_channels);
        kv.set("source16_channels", self.source16_channels);
        kv.set("source_hidden", self.source_hidden);
        kv.set("latent_channels", self.latent_channels);
        kv.set("code_channels", self.code_channels);
        kv.set("hyper_channels", self.hyper_channels);
        kv.set("hyper_hidden", self.hyper_hidden);
        kv.set("hyper_param_channels", self.hyper_param_channels);
        kv.set("diffusion_channels", self.diffusion_channels);
        kv.set("analysis", stages_to_string(&self.analysis));
        kv.set("synthesis", stages_to_string(&self.synthesis));
        kv.set("context_channels", self.context_channels);
        kv.set("lrp_channels", self.lrp_channels);
        kv.set("band_kernel", self.band_kernel);
        kv.set("gate_kernel", self.gate_kernel);
        kv.set("pixel_hidden", self.pixel_hidden);
        kv.set("predictor_hidden", self.predictor_hidden);
        kv
    }

    /// Canonical text form (sorted `key=value` lines); this is the config
    /// block stored in weight files.
    pub fn to_text(&self) -> String {
        self.to_key_values().to_text()
    }

    /// Reads a config, filling absent keys from the defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = TransformConfig::default();
        let cfg = TransformConfig {
            source8_channels: kv.parsed_or("source8_channels", d.source8_channels)?,
            source16_channels: kv.parsed_or("source16_channels", d.source16_channels)?,
            source_hidden: kv.parsed_or("source_hidden", d.source_hidden)?,
            latent_channels: kv.parsed_or("latent_channels", d.latent_channels)?,
            code_channels: kv.parsed_or("code_channels", d.code_channels)?,
            hyper_channels: kv.parsed_or("hyper_channels", d.hyper_channels)?,
            hyper_hidden: kv.parsed_or("hyper_hidden", d.hyper_hidden)?,
            hyper_param_channels: kv.parsed_or("hyper_param_channels", d.hyper_param_channels)?,
            diffusion_channels: kv.parsed_or("diffusion_channels", d.diffusion_channels)?,
            analysis: match kv.get("analysis") {
                Some(s) => parse_stages(s)?,
                None => d.analysis,
            },
            synthesis: match kv.get("synthesis") {
                Some(s) => parse_stages(s)?,
                None => d.synthesis,
            },
            context_channels: kv.parsed_or("context_channels", d.context_channels)?,
            lrp_channels: kv.parsed_or("lrp_channels", d.lrp_channels)?,
            band_kernel: kv.parsed_or("band_kernel", d.band_kernel)?,
            gate_kernel: kv.parsed_or("gate_kernel", d.gate_kernel)?,
            pixel_hidden: kv.parsed_or("pixel_hidden", d.pixel_hidden)?,
            predictor_hidden: kv.parsed_or("predictor_hidden", d.predictor_hidden)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    /// A narrow configuration for fast tests. Keeps the resolution chain but
    /// shrinks every channel count.
    pub fn tiny() -> Self {
        Self {
            source8_channels: 4,
            source16_channels: 8,
            source_hidden: 8,
            latent_channels: 8,
            code_channels: 8,
            hyper_channels: 4,
            hyper_hidden: 8,
            hyper_param_channels: 8,
            diffusion_channels: 4,
            analysis: vec![
                StageConfig {
                    channels: 8,
                    kind: BlockKind::InceptionDw,
                    blocks: 1,
                },
                StageConfig {
                    channels: 8,
                    kind: BlockKind::GatedCnn,
                    blocks: 1,
                },
            ],
            synthesis: vec![
                StageConfig {
                    channels: 8,
                    kind: BlockKind::GatedCnn,
                    blocks: 1,
                },
                StageConfig {
                    channels: 8,
                    kind: BlockKind::InceptionDw,
                    blocks: 1,
                },
                StageConfig {
                    channels: 8,
                    kind: BlockKind::PlainConv,
                    blocks: 1,
                },
            ],
            context_channels: 8,
            lrp_channels: 8,
            band_kernel: 5,
            gate_kernel: 3,
            pixel_hidden: 8,
            predictor_hidden: 8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_structural_constants() {
        let c = TransformConfig::default();
        c.validate().unwrap();
        assert_eq!(c.code_channels, 320);
        assert_eq!(c.hyper_channels, 160);
        assert_eq!(c.diffusion_channels, 4);
    }

    #[test]
    fn text_roundtrip() {
        for c in [TransformConfig::default(), TransformConfig::tiny()] {
            assert_eq!(TransformConfig::parse(&c.to_text()).unwrap(), c);
        }
        assert_eq!(TransformConfig::parse("").unwrap(), TransformConfig::default());
    }

    #[test]
    fn rejects_bad_stage_counts() {
        let mut c = TransformConfig::default();
        c.synthesis.pop();
        assert!(c.validate().is_err());
        let mut c = TransformConfig::default();
        c.analysis[1].channels = 300;
        assert!(c.validate().is_err());
        assert!(TransformConfig::parse("analysis=192:foo:1,320:gated-cnn:1").is_err());
        assert!(TransformConfig::parse("band_kernel=4").is_err());
    }
}
