use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean squared error over every element, accumulated in f64.
pub fn mse(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::Metric(format!("shape mismatch {:?} vs {:?}", x.shape(), y.shape())));
    }
    if x.is_empty() {
        return Err(Error::Metric("empty images".into()));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(sum / x.len() as f64)
}

/// `10·log10(1/MSE)` over all channels jointly, for images in `[0, 1]`.
///
/// Identical images give `f64::INFINITY`.
pub fn psnr(x: &Tensor, y: &Tensor) -> Result<f64> {
    let m = mse(x, y)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_infinite() {
        let x = Tensor::from_fn([1, 3, 4, 5], |_, c, y, x| (c + y + x) as f32 / 10.0);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn half_gray_against_black() {
        let a = Tensor::zeros([1, 3, 8, 8]);
        let b = Tensor::full([1, 3, 8, 8], 0.5);
        assert!((psnr(&a, &b).unwrap() - 6.020_599_913_279_624).abs() < 1e-12);
    }

    #[test]
    fn joint_not_per_channel_average() {
        // Channel 0 off by 0.1, the others exact: joint MSE is 0.01/3.
        let a = Tensor::zeros([1, 3, 2, 2]);
        let b = Tensor::from_fn([1, 3, 2, 2], |_, c, _, _| if c == 0 { 0.1 } else { 0.0 });
        let expect = -10.0 * ((0.1f32 as f64).powi(2) / 3.0).log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::zeros([1, 3, 2, 2]);
        assert!(matches!(psnr(&a, &Tensor::zeros([1, 3, 2, 3])), Err(Error::Metric(_))));
    }
}
