//! Mean-centered quantization and the quadtree group layout.

use crate::error::{Error, Result};
use crate::nets::GROUPS;
use crate::tensor::Tensor;

/// Position `(row, col)` owned by each group inside every aligned 2×2 block,
/// in coding order: the anchor corner, its diagonal, then the two remaining
/// corners.
pub const GROUP_OFFSETS: [(usize, usize); GROUPS] = [(0, 0), (1, 1), (0, 1), (1, 0)];

/// Symbols are kept inside the 16-bit escape payload range.
pub const SYMBOL_MIN: i32 = i16::MIN as i32;
pub const SYMBOL_MAX: i32 = i16::MAX as i32;

/// `round(v)` half away from zero, clamped to the codable symbol range.
#[inline]
pub fn symbol(v: f32) -> i32 {
    let r = v.round();
    if r.is_nan() {
        0
    } else {
        (r.clamp(SYMBOL_MIN as f32, SYMBOL_MAX as f32)) as i32
    }
}

/// Returns the transmitted symbols `round(y − μ)` and `ŷ = symbol + μ`.
pub fn quantize(y: &Tensor, mu: &Tensor) -> Result<(Vec<i32>, Tensor)> {
    y.expect_shape(mu.shape(), "quantize mean")?;
    let symbols: Vec<i32> = y.data().iter().zip(mu.data()).map(|(&v, &m)| symbol(v - m)).collect();
    let data = symbols.iter().zip(mu.data()).map(|(&s, &m)| s as f32 + m).collect();
    Ok((symbols, Tensor::new(y.shape(), data)?))
}

/// `ŷ = symbol + μ`.
pub fn dequantize(symbols: &[i32], mu: &Tensor) -> Result<Tensor> {
    if symbols.len() != mu.len() {
        return Err(Error::config(format!(
            "{} symbols for a {:?} mean field",
            symbols.len(),
            mu.shape()
        )));
    }
    Tensor::new(mu.shape(), symbols.iter().zip(mu.data()).map(|(&s, &m)| s as f32 + m).collect())
}

fn check_even(t: &Tensor) -> Result<()> {
    if !t.height().is_multiple_of(2) || !t.width().is_multiple_of(2) {
        return Err(Error::config(format!(
            "quadtree partition needs even extents, got {}x{}",
            t.height(),
            t.width()
        )));
    }
    Ok(())
}

/// One group's sub-field, shape `(n, c, h/2, w/2)`.
pub fn extract_group(t: &Tensor, group: usize) -> Result<Tensor> {
    check_even(t)?;
    let (dy, dx) = GROUP_OFFSETS[group];
    let [n, c, h, w] = t.shape();
    Ok(Tensor::from_fn([n, c, h / 2, w / 2], |b, ch, y, x| t.get(b, ch, 2 * y + dy, 2 * x + dx)))
}

/// Writes a group's sub-field into its positions of `t`.
pub fn scatter_group(t: &mut Tensor, group: usize, values: &Tensor) -> Result<()> {
    check_even(t)?;
    let [n, c, h, w] = t.shape();
    values.expect_shape([n, c, h / 2, w / 2], "group sub-field")?;
    let (dy, dx) = GROUP_OFFSETS[group];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h / 2 {
                for x in 0..w / 2 {
                    t.set(b, ch, 2 * y + dy, 2 * x + dx, values.get(b, ch, y, x));
                }
            }
        }
    }
    Ok(())
}

pub fn partition(t: &Tensor) -> Result<[Tensor; GROUPS]> {
    Ok([
        extract_group(t, 0)?,
        extract_group(t, 1)?,
        extract_group(t, 2)?,
        extract_group(t, 3)?,
    ])
}

pub fn merge(groups: &[Tensor; GROUPS]) -> Result<Tensor> {
    let [n, c, h, w] = groups[0].shape();
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    for (g, t) in groups.iter().enumerate() {
        scatter_group(&mut out, g, t)?;
    }
    Ok(out)
}

/// Full-resolution field holding `decoded[i]` at group `i`'s positions and
/// zero everywhere else.
pub fn visible_field(shape: [usize; 4], decoded: &[Tensor]) -> Result<Tensor> {
    let mut out = Tensor::zeros(shape);
    for (g, t) in decoded.iter().enumerate() {
        scatter_group(&mut out, g, t)?;
    }
    Ok(out)
}
