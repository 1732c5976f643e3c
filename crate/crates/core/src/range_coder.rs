//! Byte-oriented range coder over 16-bit cumulative frequency tables.
//!
//! The encoder keeps a 64-bit `low`, a 32-bit `range` and a cache byte plus a
//! count of pending `0xFF` bytes, so carries out of `low` are propagated into
//! already-produced output instead of being avoided. `range` is renormalized
//! to at least 2^24 after every symbol by shifting out one byte at a time.
//! The always-zero leading byte of this construction is not written.
//!
//! Stream length is exactly `4 + number of renormalization shifts`, and the
//! decoder consumes exactly that many bytes: a truncated stream makes the
//! decoder read past the end and fail, and leftover bytes are reported by
//! [`RangeDecoder::finish`].

use crate::error::{Error, Result};

pub const PRECISION_BITS: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION_BITS;
const TOP: u32 = 1 << 24;

/// A cumulative distribution over `num_buckets()` buckets with total [`TOTAL`].
///
/// `cum(0) = 0`, `cum(num_buckets()) = TOTAL`, strictly increasing.
pub trait CdfModel {
    fn num_buckets(&self) -> usize;

    fn cum(&self, k: usize) -> u32;

    /// The bucket `k` with `cum(k) ≤ value < cum(k + 1)`.
    fn find(&self, value: u32) -> usize {
        let (mut lo, mut hi) = (0usize, self.num_buckets());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cum(mid) <= value {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// An explicit cumulative table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable {
    cdf: Vec<u32>,
}

impl CdfTable {
    pub fn new(cdf: Vec<u32>) -> Result<Self> {
        if cdf.len() < 2 || cdf[0] != 0 || *cdf.last().unwrap_or(&0) != TOTAL {
            return Err(Error::Symbol(format!(
                "cdf must start at 0 and end at {TOTAL} with at least one bucket"
            )));
        }
        if let Some(i) = cdf.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Symbol(format!("cdf not strictly increasing at bucket {i}")));
        }
        Ok(Self { cdf })
    }

    /// Integer counts per bucket proportional to `weights`, every bucket at
    /// least one, summing to [`TOTAL`].
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let k = weights.len();
        if k == 0 || k > TOTAL as usize {
            return Err(Error::Symbol(format!("cannot build a table over {k} buckets")));
        }
        let sum: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        let spare = (TOTAL as usize - k) as f64;
        let mut cdf = Vec::with_capacity(k + 1);
        let mut acc = 0.0;
        cdf.push(0);
        for (i, w) in weights.iter().enumerate() {
            acc += if sum > 0.0 { w.max(0.0) / sum } else { 1.0 / k as f64 };
            let c = if i + 1 == k {
                TOTAL
            } else {
                (acc * spare).round().min(spare) as u32 + i as u32 + 1
            };
            cdf.push(c);
        }
        Self::new(cdf)
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    pub fn freq(&self, k: usize) -> u32 {
        self.cdf[k + 1] - self.cdf[k]
    }
}

impl CdfModel for CdfTable {
    fn num_buckets(&self) -> usize {
        self.cdf.len() - 1
    }

    fn cum(&self, k: usize) -> u32 {
        self.cdf[k]
    }
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    skip_first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            skip_first: true,
            out: Vec::new(),
        }
    }

    fn emit(&mut self, b: u8) {
        if self.skip_first {
            self.skip_first = false;
        } else {
            self.out.push(b);
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut b = self.cache;
            while self.pending > 0 {
                self.emit(b.wrapping_add(carry));
                b = 0xFF;
                self.pending -= 1;
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Codes the interval `[cum, cum + freq)` out of [`TOTAL`].
    pub fn encode(&mut self, cum: u32, freq: u32) -> Result<()> {
        if freq == 0 || cum + freq > TOTAL {
            return Err(Error::Symbol(format!(
                "interval [{cum}, {}) is empty or exceeds {TOTAL}",
                cum as u64 + freq as u64
            )));
        }
        let r = self.range >> PRECISION_BITS;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    pub fn encode_bucket<M: CdfModel + ?Sized>(&mut self, model: &M, k: usize) -> Result<()> {
        if k >= model.num_buckets() {
            return Err(Error::Symbol(format!(
                "bucket {k} outside table of {} buckets",
                model.num_buckets()
            )));
        }
        let lo = model.cum(k);
        self.encode(lo, model.cum(k + 1) - lo)
    }

    /// A raw 16-bit value with uniform probability.
    pub fn encode_raw16(&mut self, v: u16) -> Result<()> {
        self.encode(v as u32, 1)
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    bytes: &'a [u8],
    pos: usize,
    /// `range >> 16` of the symbol being decoded.
    r: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            code: 0,
            range: u32::MAX,
            bytes,
            pos: 0,
            r: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| Error::decode(format!("stream truncated after {} bytes", self.bytes.len())))?;
        self.pos += 1;
        Ok(b)
    }

    /// The target value in `[0, TOTAL)`; follow with [`Self::consume`].
    pub fn peek(&mut self) -> Result<u32> {
        self.r = self.range >> PRECISION_BITS;
        let v = self.code / self.r;
        if v >= TOTAL {
            return Err(Error::decode("corrupt stream: target value outside the table"));
        }
        Ok(v)
    }

    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        if freq == 0 {
            return Err(Error::decode("zero-frequency interval while decoding"));
        }
        self.code -= self.r * cum;
        self.range = self.r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte()? as u32;
        }
        Ok(())
    }

    pub fn decode_bucket<M: CdfModel + ?Sized>(&mut self, model: &M) -> Result<usize> {
        let v = self.peek()?;
        let k = model.find(v);
        let lo = model.cum(k);
        let hi = model.cum(k + 1);
        if v < lo || v >= hi {
            return Err(Error::decode("corrupt stream: value outside its bucket"));
        }
        self.consume(lo, hi - lo)?;
        Ok(k)
    }

    pub fn decode_raw16(&mut self) -> Result<u16> {
        let v = self.peek()?;
        self.consume(v, 1)?;
        Ok(v as u16)
    }

    /// Checks that the whole stream was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::decode(format!(
                "{} trailing bytes after the last symbol",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Codes bucket indices, one table per symbol.
pub fn encode_stream<M: CdfModel>(symbols: &[usize], tables: &[M]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(Error::Symbol(format!(
            "{} symbols but {} tables",
            symbols.len(),
            tables.len()
        )));
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        enc.encode_bucket(t, s)?;
    }
    Ok(enc.finish())
}

pub fn decode_stream<M: CdfModel>(bytes: &[u8], tables: &[M], n: usize) -> Result<Vec<usize>> {
    if tables.len() < n {
        return Err(Error::Symbol(format!("{n} symbols requested but {} tables", tables.len())));
    }
    let mut dec = RangeDecoder::new(bytes)?;
    let out = tables[..n]
        .iter()
        .map(|t| dec.decode_bucket(t))
        .collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}
