//! Named-parameter archive and its `SCWT` binary format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "SCWT"
//! version    u16      = 1
//! config     u32 length + UTF-8 bytes (key=value TransformConfig)
//! count      u32      number of parameters
//! per parameter:
//!   name     u32 length + UTF-8 bytes
//!   dtype    u8       0 = f32
//!   rank     u8       0..=4
//!   extents  u32 × rank
//!   payload  f32 × product(extents)
//! model-id   8 bytes  first 8 bytes of SHA-256(config ‖ payloads in name order)
//! ```
//!
//! Tensors of rank below four are left-padded with unit extents on load, so a
//! rank-1 bias of length `C` becomes `(1, 1, 1, C)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nets::config::TransformConfig;
use crate::nets::networks::Networks;
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SCWT";
pub const WEIGHTS_VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;

/// Content digest binding a container to the weights that produced it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ModelId(pub [u8; 8]);

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelId({self})")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightStore {
    config_text: String,
    params: BTreeMap<String, Tensor>,
    model_id: ModelId,
}

fn digest(config_text: &str, params: &BTreeMap<String, Tensor>) -> ModelId {
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    for t in params.values() {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    let full = h.finalize();
    let mut id = [0u8; 8];
    id.copy_from_slice(&full[..8]);
    ModelId(id)
}

impl WeightStore {
    pub fn new(config_text: impl Into<String>, params: BTreeMap<String, Tensor>) -> Self {
        let config_text = config_text.into();
        let model_id = digest(&config_text, &params);
        Self {
            config_text,
            params,
            model_id,
        }
    }

    /// A schema-complete store with seeded uniform fan-in initialization.
    pub fn random(config: &TransformConfig, seed: u64) -> Result<Self> {
        let mut src = RandomSource::new(seed);
        Networks::build(config, &mut src)?;
        Ok(Self::new(config.to_text(), src.params))
    }

    pub fn model_id(&self) -> ModelId {
        self.model_id
    }

    pub fn config_text(&self) -> &str {
        &self.config_text
    }

    pub fn config(&self) -> Result<TransformConfig> {
        TransformConfig::parse(&self.config_text)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Returns a copy with `f` applied to every parameter whose name matches
    /// `select`; the model-id is recomputed.
    pub fn map_params(
        &self,
        select: impl Fn(&str) -> bool,
        f: impl Fn(&str, &Tensor) -> Tensor,
    ) -> WeightStore {
        let params = self
            .params
            .iter()
            .map(|(k, v)| {
                let t = if select(k) { f(k, v) } else { v.clone() };
                (k.clone(), t)
            })
            .collect();
        WeightStore::new(self.config_text.clone(), params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.push(4);
            for e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            out.extend_from_slice(&t.to_le_bytes());
        }
        out.extend_from_slice(&self.model_id.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHTS_MAGIC {
            return Err(Error::format(0, "bad magic, expected \"SCWT\""));
        }
        let version = r.u16()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::format(4, format!("unsupported weight-file version {version}")));
        }
        let config_text = r.string()?;
        let count = r.u32()? as usize;
        let mut params = BTreeMap::new();
        for _ in 0..count {
            let at = r.pos;
            let name = r.string()?;
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::format(r.pos - 1, format!("`{name}`: unsupported dtype tag {dtype}")));
            }
            let rank = r.u8()? as usize;
            if rank > 4 {
                return Err(Error::format(r.pos - 1, format!("`{name}`: rank {rank} exceeds 4")));
            }
            let mut shape = [1usize; 4];
            for i in 0..rank {
                shape[4 - rank + i] = r.u32()? as usize;
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::format(r.pos, "payload size overflow"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if params.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
                return Err(Error::format(at, format!("duplicate parameter `{name}`")));
            }
        }
        let mut stored = [0u8; 8];
        stored.copy_from_slice(r.take(8)?);
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos, "trailing bytes after model-id"));
        }
        let store = WeightStore::new(config_text, params);
        if store.model_id.0 != stored {
            return Err(Error::CorruptWeights {
                stored: ModelId(stored).to_string(),
                computed: store.model_id.to_string(),
            });
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("scwt.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.pos,
                format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
            )),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let at = self.pos;
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(at, "invalid UTF-8"))
    }
}

/// How a parameter is initialized when weights are generated rather than loaded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(3 / fan_in)` (unit-variance preserving for linear maps).
    Weight { fan_in: usize },
    /// Small uniform noise around zero.
    Bias,
    Const(f32),
}

/// Where network constructors get their parameters from.
pub trait ParamSource {
    fn take(&mut self, name: &str, shape: [usize; 4], init: Init) -> Result<Tensor>;
}

/// Pulls parameters out of a loaded store, checking names and shapes.
pub struct StoreSource<'a> {
    store: &'a WeightStore,
    used: BTreeSet<String>,
}

impl<'a> StoreSource<'a> {
    pub fn new(store: &'a WeightStore) -> Self {
        Self {
            store,
            used: BTreeSet::new(),
        }
    }

    /// Stored parameters no network asked for.
    pub fn unused(&self) -> Vec<&str> {
        self.store
            .params
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(String::as_str)
            .collect()
    }
}

impl ParamSource for StoreSource<'_> {
    fn take(&mut self, name: &str, shape: [usize; 4], _init: Init) -> Result<Tensor> {
        let t = self.store.get(name).ok_or_else(|| Error::Schema {
            name: name.to_string(),
            message: format!("missing parameter (expected shape {shape:?})"),
        })?;
        if t.shape() != shape {
            return Err(Error::Schema {
                name: name.to_string(),
                message: format!("stored shape {:?}, network requests {shape:?}", t.shape()),
            });
        }
        self.used.insert(name.to_string());
        Ok(t.clone())
    }
}

/// Generates parameters from a seeded ChaCha stream.
pub struct RandomSource {
    rng: ChaCha8Rng,
    params: BTreeMap<String, Tensor>,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: BTreeMap::new(),
        }
    }
}

impl ParamSource for RandomSource {
    fn take(&mut self, name: &str, shape: [usize; 4], init: Init) -> Result<Tensor> {
        let rng = &mut self.rng;
        let t = match init {
            Init::Weight { fan_in } => {
                let a = (3.0 / fan_in.max(1) as f32).sqrt();
                Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-a..a))
            }
            Init::Bias => Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-0.05f32..0.05)),
            Init::Const(v) => Tensor::full(shape, v),
        };
        if self.params.insert(name.to_string(), t.clone()).is_some() {
            return Err(Error::config(format!("parameter `{name}` requested twice")));
        }
        Ok(t)
    }
}

/// Records the parameter schema (name and shape) without materializing weights.
#[derive(Default)]
pub struct SchemaRecorder {
    pub entries: Vec<(String, [usize; 4])>,
}

impl ParamSource for SchemaRecorder {
    fn take(&mut self, name: &str, shape: [usize; 4], _init: Init) -> Result<Tensor> {
        self.entries.push((name.to_string(), shape));
        Ok(Tensor::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_store() -> WeightStore {
        let mut p = BTreeMap::new();
        p.insert("a.weight".into(), Tensor::from_fn([2, 1, 3, 3], |_, _, y, x| (y * 3 + x) as f32));
        p.insert("a.bias".into(), Tensor::new([1, 1, 1, 2], vec![0.5, -0.5]).unwrap());
        p.insert("b".into(), Tensor::full([1, 1, 1, 1], 7.0));
        WeightStore::new("code_channels=320\n", p)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let s = small_store();
        let bytes = s.to_bytes();
        let back = WeightStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.scwt");
        let s = small_store();
        s.save(&path).unwrap();
        assert_eq!(WeightStore::load(&path).unwrap(), s);
    }

    #[test]
    fn flipped_payload_byte_is_detected() {
        let s = small_store();
        let mut bytes = s.to_bytes();
        let n = bytes.len();
        bytes[n - 8 - 3] ^= 0x40; // inside the last payload
        match WeightStore::from_bytes(&bytes) {
            Err(Error::CorruptWeights { .. }) => {}
            other => panic!("expected digest mismatch, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let bytes = small_store().to_bytes();
        assert!(matches!(WeightStore::from_bytes(&bytes[..10]), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(WeightStore::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        let mut extra = bytes;
        extra.push(0);
        assert!(WeightStore::from_bytes(&extra).is_err());
    }

    #[test]
    fn model_id_depends_on_content() {
        let a = small_store();
        let b = a.map_params(|n| n == "b", |_, t| t.scale(2.0));
        assert_ne!(a.model_id(), b.model_id());
        let c = WeightStore::new("code_channels=321\n", a.params().clone());
        assert_ne!(a.model_id(), c.model_id());
    }

    #[test]
    fn store_source_reports_missing_and_misshaped() {
        let s = small_store();
        let mut src = StoreSource::new(&s);
        let e = src.take("nope", [1, 1, 1, 1], Init::Bias).unwrap_err();
        assert!(matches!(&e, Error::Schema { name, .. } if name == "nope"));
        let e = src.take("b", [1, 1, 1, 2], Init::Bias).unwrap_err();
        assert!(matches!(&e, Error::Schema { name, .. } if name == "b"));
        src.take("b", [1, 1, 1, 1], Init::Bias).unwrap();
        assert_eq!(src.unused(), vec!["a.bias", "a.weight"]);
    }
}
