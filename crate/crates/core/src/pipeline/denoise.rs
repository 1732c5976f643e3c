//! One-step denoising `l_0 = (l_T − √(1−ᾱ_T)·ε̂) / √ᾱ_T`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nets::Networks;
use crate::pipeline::schedule::NoiseSchedule;
use crate::tensor::Tensor;

/// Predicts the noise in a latent at a timestep index.
pub trait EpsilonPredictor: Send + Sync {
    fn predict(&self, latent: &Tensor, t: usize) -> Result<Tensor>;

    /// Receptive margin in latent pixels, for tiling.
    fn margin(&self) -> usize {
        0
    }
}

/// Predicts no noise, so denoising reduces to a rescale.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPredictor;

impl EpsilonPredictor for ZeroPredictor {
    fn predict(&self, latent: &Tensor, _t: usize) -> Result<Tensor> {
        Ok(Tensor::zeros(latent.shape()))
    }
}

/// The small convolutional predictor stored under `eps.*`; the timestep
/// enters as an extra constant channel `t / 1000`.
#[derive(Clone, Debug)]
pub struct ToyPredictor {
    nets: Arc<Networks>,
}

impl ToyPredictor {
    pub fn new(nets: Arc<Networks>) -> Self {
        Self { nets }
    }
}

impl EpsilonPredictor for ToyPredictor {
    fn predict(&self, latent: &Tensor, t: usize) -> Result<Tensor> {
        let [n, _, h, w] = latent.shape();
        let time = Tensor::full([n, 1, h, w], t as f32 / 1000.0);
        self.nets.predictor.forward(&Tensor::concat_channels(&[latent, &time])?)
    }

    fn margin(&self) -> usize {
        self.nets.predictor.reach(0.0, 1.0).0.ceil() as usize
    }
}

/// Evaluates the inversion elementwise in f64.
pub fn one_step_denoise(
    latent: &Tensor,
    schedule: &NoiseSchedule,
    t: usize,
    predictor: &dyn EpsilonPredictor,
) -> Result<Tensor> {
    let ab = schedule.alpha_bar(t)?;
    let eps = predictor.predict(latent, t)?;
    if eps.shape() != latent.shape() {
        return Err(Error::Contract(format!(
            "noise predictor returned {:?} for a {:?} latent",
            eps.shape(),
            latent.shape()
        )));
    }
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    latent.zip_map(&eps, |l, e| ((l as f64 - sn * e as f64) / sa) as f32)
}
