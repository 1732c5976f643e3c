//! Discretized Gaussian tables, escape coding and rate estimation.
//!
//! Symbols `−127..=127` map to buckets `0..=254`; bucket 255 is the escape
//! bucket and carries all tail mass. An escaped symbol is followed by its
//! two's-complement 16-bit value coded with uniform probability.
//!
//! Bucket `k` starts at `cum(k) = round(G(k)·(2^16 − 256)) + k`, where `G(k)`
//! is the Gaussian mass of `[−127.5, k − 127.5)` and `G(256) = 1`. The `+ k`
//! term guarantees every bucket at least one count.

use crate::error::{Error, Result};
use crate::range_coder::{CdfModel, CdfTable, RangeDecoder, RangeEncoder, TOTAL};

pub const SUPPORT: i32 = 127;
pub const BUCKETS: usize = 2 * SUPPORT as usize + 2;
pub const ESCAPE: usize = BUCKETS - 1;
const SPREAD: f64 = (TOTAL as usize - BUCKETS) as f64;

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// The discretized Gaussian with offset `mu` (relative to the rounding
/// reference) and scale `sigma`; table entries are computed on demand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianCdf {
    mu: f64,
    sigma: f64,
    base: f64,
}

impl GaussianCdf {
    pub fn new(mu: f32, sigma: f32) -> Self {
        let (mu, sigma) = (mu as f64, sigma as f64);
        let base = normal_cdf((-(SUPPORT as f64) - 0.5 - mu) / sigma);
        Self { mu, sigma, base }
    }

    /// Centered at zero, as used for mean-centered symbols.
    pub fn centered(sigma: f32) -> Self {
        Self::new(0.0, sigma)
    }

    fn mass_below(&self, k: usize) -> f64 {
        let edge = k as f64 - SUPPORT as f64 - 0.5;
        (normal_cdf((edge - self.mu) / self.sigma) - self.base).max(0.0)
    }

    pub fn table(&self) -> CdfTable {
        CdfTable::new((0..=BUCKETS).map(|k| self.cum(k)).collect())
            .expect("discretized Gaussian tables are strictly increasing by construction")
    }
}

impl CdfModel for GaussianCdf {
    fn num_buckets(&self) -> usize {
        BUCKETS
    }

    fn cum(&self, k: usize) -> u32 {
        if k >= BUCKETS {
            TOTAL
        } else {
            (self.mass_below(k) * SPREAD).round() as u32 + k as u32
        }
    }
}

/// Materialized table for `(mu, sigma)`.
pub fn build_cdf(mu: f32, sigma: f32) -> CdfTable {
    GaussianCdf::new(mu, sigma).table()
}

#[inline]
pub fn bucket_of(s: i32) -> usize {
    if s.abs() <= SUPPORT {
        (s + SUPPORT) as usize
    } else {
        ESCAPE
    }
}

/// Exact code length in bits of `s` under `model`, escape payload included.
pub fn symbol_bits<M: CdfModel>(model: &M, s: i32) -> f64 {
    let k = bucket_of(s);
    let freq = model.cum(k + 1) - model.cum(k);
    let bits = -(freq as f64 / TOTAL as f64).log2();
    if k == ESCAPE {
        bits + 16.0
    } else {
        bits
    }
}

pub fn encode_symbol<M: CdfModel>(enc: &mut RangeEncoder, model: &M, s: i32) -> Result<()> {
    let k = bucket_of(s);
    enc.encode_bucket(model, k)?;
    if k == ESCAPE {
        let v = i16::try_from(s).map_err(|_| Error::Symbol(format!("symbol {s} exceeds the 16-bit escape range")))?;
        enc.encode_raw16(v as u16)?;
    }
    Ok(())
}

pub fn decode_symbol<M: CdfModel>(dec: &mut RangeDecoder<'_>, model: &M) -> Result<i32> {
    let k = dec.decode_bucket(model)?;
    if k == ESCAPE {
        Ok(dec.decode_raw16()? as i16 as i32)
    } else {
        Ok(k as i32 - SUPPORT)
    }
}

/// Codes mean-centered symbols with one scale each.
pub fn encode_centered(symbols: &[i32], sigmas: &[f32]) -> Result<Vec<u8>> {
    if symbols.len() != sigmas.len() {
        return Err(Error::Symbol(format!(
            "{} symbols but {} scales",
            symbols.len(),
            sigmas.len()
        )));
    }
    let mut enc = RangeEncoder::new();
    for (&s, &sg) in symbols.iter().zip(sigmas) {
        encode_symbol(&mut enc, &GaussianCdf::centered(sg), s)?;
    }
    Ok(enc.finish())
}

pub fn decode_centered(bytes: &[u8], sigmas: &[f32]) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let out = sigmas
        .iter()
        .map(|&sg| decode_symbol(&mut dec, &GaussianCdf::centered(sg)))
        .collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}

/// Σ −log2 P(symbol) under the same tables used for coding.
pub fn centered_bits(symbols: &[i32], sigmas: &[f32]) -> f64 {
    symbols
        .iter()
        .zip(sigmas)
        .map(|(&s, &sg)| symbol_bits(&GaussianCdf::centered(sg), s))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tiny_sigma_is_near_deterministic() {
        let t = build_cdf(0.0, 0.04);
        assert!(t.freq(bucket_of(0)) >= TOTAL - 2 * BUCKETS as u32);
        assert!(symbol_bits(&GaussianCdf::centered(0.04), 0) < 0.01);
    }

    #[test]
    fn half_probability_is_one_bit() {
        let t = CdfTable::new(vec![0, TOTAL / 2, TOTAL]).unwrap();
        let freq = t.freq(0) as f64 / TOTAL as f64;
        assert_eq!(-freq.log2(), 1.0);
    }

    #[test]
    fn wide_sigma_is_locally_flat() {
        let t = build_cdf(0.0, 64.0);
        for s in -64..64 {
            let a = t.freq(bucket_of(s)) as f64;
            let b = t.freq(bucket_of(s + 1)) as f64;
            assert!((a - b).abs() / a <= 0.02, "{s}: {a} vs {b}");
        }
    }

    #[test]
    fn unit_scale_zero_symbol() {
        // Φ(0.5) − Φ(−0.5) = 0.382924922548026207 (mpmath, 30 digits), 1.38486653 bits.
        let p = normal_cdf(0.5) - normal_cdf(-0.5);
        assert!((p - 0.382_924_922_548_026_2).abs() < 1e-12);
        let bits = symbol_bits(&GaussianCdf::centered(1.0), 0);
        assert!((bits - 1.385).abs() < 0.01, "{bits}");
    }

    #[test]
    fn escapes_roundtrip() {
        let syms = [0, 127, -127, 128, -128, 32767, -32768, 3];
        let sig = [1.0f32; 8];
        let bytes = encode_centered(&syms, &sig).unwrap();
        assert_eq!(decode_centered(&bytes, &sig).unwrap(), syms);
        assert!(symbol_bits(&GaussianCdf::centered(1.0), 500) > 16.0);
    }

    proptest! {
        #[test]
        fn tables_are_valid(mu in -200.0f32..200.0, sigma in 0.04f32..64.0) {
            let t = build_cdf(mu, sigma);
            prop_assert_eq!(t.cdf()[0], 0);
            prop_assert_eq!(t.cdf()[BUCKETS], TOTAL);
            prop_assert!((0..BUCKETS).all(|k| t.freq(k) >= 1));
            let lazy = GaussianCdf::new(mu, sigma);
            for v in [0u32, 1, 1000, 32768, 65535] {
                prop_assert_eq!(lazy.find(v), t.find(v));
            }
        }
    }
}
