//! Cumulative noise schedules `ᾱ_t`.

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 1000;
pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;
/// Timestep index used when none is configured: the last one.
pub const DEFAULT_TIMESTEP: usize = DEFAULT_STEPS - 1;

/// `ᾱ_t` for `t = 0..len()`; index `t` is the `(t+1)`-th diffusion step.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha_bars: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_STEPS, BETA_START, BETA_END).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    /// `β` linear from `beta_start` to `beta_end`, `ᾱ_t = Π_{s≤t} (1 − β_s)`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 || !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::config(format!(
                "invalid linear schedule: {steps} steps, beta {beta_start}..{beta_end}"
            )));
        }
        let mut acc = 1.0;
        let alpha_bars = (0..steps)
            .map(|i| {
                let beta = if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                };
                acc *= 1.0 - beta;
                acc
            })
            .collect();
        Ok(Self { alpha_bars })
    }

    /// An explicit schedule; values must lie in `(0, 1]` and be non-increasing.
    pub fn from_alpha_bars(alpha_bars: Vec<f64>) -> Result<Self> {
        if alpha_bars.is_empty() {
            return Err(Error::config("empty noise schedule"));
        }
        if let Some(i) = alpha_bars.iter().position(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::config(format!("alpha_bar[{i}] = {} outside (0, 1]", alpha_bars[i])));
        }
        if let Some(i) = alpha_bars.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::config(format!("alpha_bar increases at index {}", i + 1)));
        }
        Ok(Self { alpha_bars })
    }

    pub fn len(&self) -> usize {
        self.alpha_bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bars.is_empty()
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars.get(t).copied().ok_or_else(|| {
            Error::config(format!("timestep {t} outside schedule of {} steps", self.alpha_bars.len()))
        })
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}
