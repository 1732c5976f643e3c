//! Bjøntegaard delta rate with the classical cubic fit of `log10(bpp)`
//! against quality.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePoint {
    pub bpp: f64,
    pub quality: f64,
}

/// At least four points with strictly increasing, positive bpp.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    points: Vec<RatePoint>,
}

impl Curve {
    pub fn new(points: Vec<RatePoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Metric(format!("a cubic fit needs at least 4 points, got {}", points.len())));
        }
        if let Some(p) = points.iter().find(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.quality.is_finite())) {
            return Err(Error::Metric(format!("invalid rate point {p:?}")));
        }
        if points.windows(2).any(|w| w[1].bpp <= w[0].bpp) {
            return Err(Error::Metric("curve bpp must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// Builds a curve from `(bpp, quality)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(bpp, quality)| RatePoint { bpp, quality }).collect())
    }

    pub fn points(&self) -> &[RatePoint] {
        &self.points
    }

    fn quality_range(&self) -> (f64, f64) {
        let q = self.points.iter().map(|p| p.quality);
        (q.clone().fold(f64::INFINITY, f64::min), q.fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Least-squares cubic in the normalized variable `u = (q − center) / scale`.
struct Cubic {
    center: f64,
    scale: f64,
    coef: [f64; 4],
}

impl Cubic {
    fn fit(curve: &Curve) -> Result<Self> {
        let (lo, hi) = curve.quality_range();
        let center = 0.5 * (lo + hi);
        let scale = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
        let n = curve.points.len();
        let a = DMatrix::from_fn(n, 4, |r, c| ((curve.points[r].quality - center) / scale).powi(c as i32));
        let b = DVector::from_iterator(n, curve.points.iter().map(|p| p.bpp.log10()));
        let x = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Metric(format!("cubic fit failed: {e}")))?;
        Ok(Self {
            center,
            scale,
            coef: [x[0], x[1], x[2], x[3]],
        })
    }

    /// `∫ p(q) dq` from `lo` to `hi`.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let prim = |q: f64| {
            let u = (q - self.center) / self.scale;
            self.coef.iter().enumerate().map(|(k, c)| c * u.powi(k as i32 + 1) / (k + 1) as f64).sum::<f64>()
        };
        self.scale * (prim(hi) - prim(lo))
    }
}

/// Average bitrate change of `test` relative to `anchor` at equal quality,
/// in percent. Negative means `test` saves bits.
pub fn bd_rate(anchor: &Curve, test: &Curve) -> Result<f64> {
    let (alo, ahi) = anchor.quality_range();
    let (tlo, thi) = test.quality_range();
    let (lo, hi) = (alo.max(tlo), ahi.min(thi));
    if hi <= lo {
        return Err(Error::Metric(format!(
            "quality ranges [{alo}, {ahi}] and [{tlo}, {thi}] do not overlap"
        )));
    }
    let fa = Cubic::fit(anchor)?;
    let ft = Cubic::fit(test)?;
    let delta = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok(100.0 * (10f64.powf(delta) - 1.0))
}
