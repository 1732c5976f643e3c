//! Step-wise parameter prediction, latent residual prediction, and the
//! factorized prior for the hyper latent.

use crate::entropy::gaussian::{centered_bits, decode_centered, encode_centered};
use crate::entropy::quant::{extract_group, quantize, scatter_group, visible_field};
use crate::error::{Error, Result};
use crate::nets::{FactorizedPrior, Networks, GROUPS, SIGMA_MAX, SIGMA_MIN};
use crate::tensor::Tensor;

/// Gaussian parameters for one group, laid out like the group's sub-field.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: Tensor,
    pub sigma: Tensor,
}

/// Bits per stream: the hyper latent, then the four groups in coding order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RateEstimate {
    pub z_bits: f64,
    pub group_bits: [f64; GROUPS],
}

impl RateEstimate {
    pub fn total_bits(&self) -> f64 {
        self.z_bits + self.group_bits.iter().sum::<f64>()
    }
}

/// Parameters for group `step` (1-based) from the hyperprior features and
/// the groups decoded so far (`decoded.len() == step − 1`).
///
/// `y_shape` is the shape of the full code latent.
pub fn predict_params(
    nets: &Networks,
    phi: &Tensor,
    y_shape: [usize; 4],
    decoded: &[Tensor],
    step: usize,
) -> Result<GaussianParams> {
    if !(1..=GROUPS).contains(&step) {
        return Err(Error::Sequencing(format!("step {step} outside 1..={GROUPS}")));
    }
    if decoded.len() != step - 1 {
        return Err(Error::Sequencing(format!(
            "step {step} needs {} decoded groups, got {}",
            step - 1,
            decoded.len()
        )));
    }
    let visible = visible_field(y_shape, decoded)?;
    let (mu, sigma) = nets.context.predict(phi, &visible, step - 1)?;
    Ok(GaussianParams {
        mu: extract_group(&mu, step - 1)?,
        sigma: extract_group(&sigma, step - 1)?,
    })
}

/// Refines the just-decoded group `step` (1-based):
/// `ŷ_i + 0.5·tanh(lrp_i(concat[μ_i, ŷ_{≤i}]))`.
///
/// `decoded` holds groups `1..=step`, the last one unrefined.
pub fn apply_lrp(
    nets: &Networks,
    y_shape: [usize; 4],
    decoded: &[Tensor],
    mu: &Tensor,
    step: usize,
) -> Result<Tensor> {
    if decoded.len() != step {
        return Err(Error::Sequencing(format!(
            "LRP for step {step} needs {step} groups, got {}",
            decoded.len()
        )));
    }
    let visible = visible_field(y_shape, decoded)?;
    let mut mu_field = Tensor::zeros(y_shape);
    scatter_group(&mut mu_field, step - 1, mu)?;
    let delta = nets.lrp_delta(step - 1, &mu_field, &visible)?;
    decoded[step - 1].add(&extract_group(&delta, step - 1)?)
}

/// Per-channel offsets and clamped scales expanded to every element of `z`,
/// in storage order.
fn prior_fields(prior: &FactorizedPrior, shape: [usize; 4]) -> Result<(Tensor, Vec<f32>)> {
    let [_, c, _, _] = shape;
    if prior.loc.len() != c || prior.scale.len() != c {
        return Err(Error::config(format!(
            "factorized prior has {} channels, hyper latent has {c}",
            prior.loc.len()
        )));
    }
    let loc = Tensor::from_fn(shape, |_, ch, _, _| prior.loc[ch]);
    let scale = Tensor::from_fn(shape, |_, ch, _, _| prior.scale[ch].clamp(SIGMA_MIN, SIGMA_MAX));
    Ok((loc, scale.into_data()))
}

/// Quantizes `z` around the per-channel locations.
pub fn quantize_hyper(prior: &FactorizedPrior, z: &Tensor) -> Result<(Vec<i32>, Tensor)> {
    let (loc, _) = prior_fields(prior, z.shape())?;
    quantize(z, &loc)
}

pub fn encode_hyper(prior: &FactorizedPrior, shape: [usize; 4], symbols: &[i32]) -> Result<Vec<u8>> {
    let (_, scale) = prior_fields(prior, shape)?;
    encode_centered(symbols, &scale)
}

/// Returns the symbols and `ẑ`.
pub fn decode_hyper(prior: &FactorizedPrior, shape: [usize; 4], bytes: &[u8]) -> Result<(Vec<i32>, Tensor)> {
    let (loc, scale) = prior_fields(prior, shape)?;
    let symbols = decode_centered(bytes, &scale)?;
    let z_hat = crate::entropy::quant::dequantize(&symbols, &loc)?;
    Ok((symbols, z_hat))
}

pub fn hyper_bits(prior: &FactorizedPrior, shape: [usize; 4], symbols: &[i32]) -> Result<f64> {
    let (_, scale) = prior_fields(prior, shape)?;
    Ok(centered_bits(symbols, &scale))
}
