use crate::diffcore::{Tape, Tensor, Var, Vjp};
use crate::error::{Error, Result};
use crate::losses::ssim::{d_ssim_with_grad, SsimParams};
use crate::renderer::Image;
use crate::scalar::Real;

/// Photometric loss value together with its two components.
#[derive(Clone, Debug)]
pub struct Photometric<T: Real> {
    pub l1: T,
    pub dssim: T,
    pub total: T,
    pub grad: Vec<T>,
}

/// Mean absolute error and its subgradient.
pub fn mean_l1_with_grad<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<(T, Vec<T>)> {
    if !a.same_size(b) {
        return Err(Error::Size(format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    let inv = T::one() / T::of_usize(a.pixels.len());
    let mut total = T::zero();
    let grad = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x - y;
            total = total + d.abs();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((total * inv, grad))
}

/// `(1 − λ)·mean L1 + λ·D-SSIM`, differentiable with respect to `rendered`.
pub fn photometric_loss<T: Real>(rendered: &Image<T>, target: &Image<T>, lambda: T, ssim: &SsimParams) -> Result<Photometric<T>> {
    let (l1, g1) = mean_l1_with_grad(rendered, target)?;
    let (dssim, gs) = d_ssim_with_grad(rendered, target, ssim)?;
    let w1 = T::one() - lambda;
    let grad = g1.iter().zip(&gs).map(|(&a, &b)| w1 * a + lambda * b).collect();
    Ok(Photometric { l1, dssim, total: w1 * l1 + lambda * dssim, grad })
}

struct ImageLossOp<T: Real> {
    grad: Vec<T>,
    shape: Vec<usize>,
}

impl<T: Real> Vjp<T> for ImageLossOp<T> {
    fn name(&self) -> &'static str {
        "photometric"
    }

    fn backward(&self, _i: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let s = g.data()[0];
        let data = self.grad.iter().map(|&v| v * s).collect();
        vec![Some(Tensor::new(&self.shape, data).expect("image shape"))]
    }
}

pub fn tensor_to_image<T: Real>(t: &Tensor<T>) -> Result<Image<T>> {
    let s = t.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::dim(format!("image tensor must be H×W×3, got {s:?}")));
    }
    Image::new(s[1], s[0], t.data().to_vec())
}

/// Records the photometric loss of an `H×W×3` image var against `target`.
pub fn photometric_op<T: Real>(tape: &mut Tape<T>, rendered: Var, target: &Image<T>, lambda: T, ssim: &SsimParams) -> Result<(Var, Photometric<T>)> {
    let img = tensor_to_image(tape.value(rendered))?;
    let pm = photometric_loss(&img, target, lambda, ssim)?;
    let shape = tape.value(rendered).shape().to_vec();
    let v = tape.push(&[rendered], Tensor::scalar(pm.total), ImageLossOp { grad: pm.grad.clone(), shape });
    Ok((v, pm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, off: f64) -> Image<f64> {
        let px = (0..n * n * 3).map(|i| (i as f64 * 0.37 + off).sin() * 0.5 + 0.5).collect();
        Image::new(n, n, px).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let a = ramp(16, 0.0);
        let pm = photometric_loss(&a, &a, 0.2, &SsimParams::default()).unwrap();
        assert_eq!(pm.total, 0.0);
    }

    #[test]
    fn lambda_zero_is_mean_l1() {
        let (a, b) = (ramp(12, 0.0), ramp(12, 0.3));
        let pm = photometric_loss(&a, &b, 0.0, &SsimParams::default()).unwrap();
        let l1: f64 = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.pixels.len() as f64;
        assert!((pm.total - l1).abs() < 1e-15);
    }

    #[test]
    fn size_mismatch() {
        assert!(photometric_loss(&ramp(12, 0.0), &ramp(13, 0.0), 0.2, &SsimParams::default()).is_err());
    }
}
