//! Structural similarity with a Gaussian window, and its gradient.

use crate::error::{Error, Result};
use crate::renderer::Image;
use crate::scalar::Real;

/// Window and stability constants.
#[derive(Clone, Copy, Debug)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, c1: 0.01 * 0.01, c2: 0.03 * 0.03 }
    }
}

fn gaussian_kernel<T: Real>(window: usize, sigma: f64) -> Vec<T> {
    let c = (window as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..window).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::of(v / s)).collect()
}

/// Single-channel plane.
struct Plane<T> {
    w: usize,
    h: usize,
    v: Vec<T>,
}

/// Valid-mode separable correlation: output is `(h−n+1)×(w−n+1)`.
fn filter_valid<T: Real>(p: &Plane<T>, k: &[T]) -> Plane<T> {
    let n = k.len();
    let (ow, oh) = (p.w + 1 - n, p.h + 1 - n);
    let mut tmp = vec![T::zero(); p.h * ow];
    for y in 0..p.h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|i| k[i] * p.v[y * p.w + x + i]).sum();
        }
    }
    let mut out = vec![T::zero(); oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    Plane { w: ow, h: oh, v: out }
}

/// Adjoint of [`filter_valid`]: spreads a `(h−n+1)×(w−n+1)` map back to `h×w`.
fn filter_valid_adjoint<T: Real>(g: &Plane<T>, k: &[T], w: usize, h: usize) -> Vec<T> {
    let n = k.len();
    let mut tmp = vec![T::zero(); h * g.w];
    for y in 0..g.h {
        for x in 0..g.w {
            let v = g.v[y * g.w + x];
            for i in 0..n {
                tmp[(y + i) * g.w + x] = tmp[(y + i) * g.w + x] + k[i] * v;
            }
        }
    }
    let mut out = vec![T::zero(); h * w];
    for y in 0..h {
        for x in 0..g.w {
            let v = tmp[y * g.w + x];
            for i in 0..n {
                out[y * w + x + i] = out[y * w + x + i] + k[i] * v;
            }
        }
    }
    out
}

fn channel<T: Real>(img: &Image<T>, c: usize) -> Plane<T> {
    Plane { w: img.width, h: img.height, v: img.pixels.iter().skip(c).step_by(3).copied().collect() }
}

/// Mean SSIM over every full window position and channel, with its gradient
/// with respect to `a` (same layout as `a.pixels`).
pub fn ssim_with_grad<T: Real>(a: &Image<T>, b: &Image<T>, params: &SsimParams) -> Result<(T, Vec<T>)> {
    if !a.same_size(b) {
        return Err(Error::Size(format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    if a.width < params.window || a.height < params.window {
        return Err(Error::Size(format!("{}x{} image is smaller than the {} window", a.width, a.height, params.window)));
    }
    let k = gaussian_kernel::<T>(params.window, params.sigma);
    let (c1, c2) = (T::of(params.c1), T::of(params.c2));
    let two = T::of(2.0);
    let (w, h) = (a.width, a.height);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); a.pixels.len()];
    let mut count = 0usize;
    let mut per_channel = Vec::with_capacity(3);
    for c in 0..3 {
        let pa = channel(a, c);
        let pb = channel(b, c);
        let sq = |p: &Plane<T>, q: &Plane<T>| Plane { w, h, v: p.v.iter().zip(&q.v).map(|(&x, &y)| x * y).collect() };
        let mu_a = filter_valid(&pa, &k);
        let mu_b = filter_valid(&pb, &k);
        let e_aa = filter_valid(&sq(&pa, &pa), &k);
        let e_bb = filter_valid(&sq(&pb, &pb), &k);
        let e_ab = filter_valid(&sq(&pa, &pb), &k);
        let n = mu_a.v.len();
        let mut d_mu = vec![T::zero(); n];
        let mut d_eaa = vec![T::zero(); n];
        let mut d_eab = vec![T::zero(); n];
        for i in 0..n {
            let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
            let var_a = e_aa.v[i] - ma * ma;
            let var_b = e_bb.v[i] - mb * mb;
            let cov = e_ab.v[i] - ma * mb;
            let a1 = two * ma * mb + c1;
            let a2 = two * cov + c2;
            let b1 = ma * ma + mb * mb + c1;
            let b2 = var_a + var_b + c2;
            let s = a1 * a2 / (b1 * b2);
            total = total + s;
            d_mu[i] = (two * mb * a2 - two * mb * a1) / (b1 * b2) - s * (two * ma / b1 - two * ma / b2);
            d_eaa[i] = -s / b2;
            d_eab[i] = two * a1 / (b1 * b2);
        }
        per_channel.push((d_mu, d_eaa, d_eab, mu_a.w, mu_a.h));
        count += n;
    }
    let inv = T::one() / T::of_usize(count);
    for (c, (d_mu, d_eaa, d_eab, ow, oh)) in per_channel.into_iter().enumerate() {
        let spread = |v: Vec<T>| filter_valid_adjoint(&Plane { w: ow, h: oh, v }, &k, w, h);
        let g_mu = spread(d_mu);
        let g_aa = spread(d_eaa);
        let g_ab = spread(d_eab);
        for p in 0..w * h {
            let av = a.pixels[p * 3 + c];
            let bv = b.pixels[p * 3 + c];
            grad[p * 3 + c] = (g_mu[p] + two * av * g_aa[p] + bv * g_ab[p]) * inv;
        }
    }
    Ok((total * inv, grad))
}

pub fn ssim<T: Real>(a: &Image<T>, b: &Image<T>, params: &SsimParams) -> Result<T> {
    ssim_with_grad(a, b, params).map(|(v, _)| v)
}

/// `(1 − SSIM) / 2` and its gradient with respect to `a`.
pub fn d_ssim_with_grad<T: Real>(a: &Image<T>, b: &Image<T>, params: &SsimParams) -> Result<(T, Vec<T>)> {
    let (s, g) = ssim_with_grad(a, b, params)?;
    let half = T::of(0.5);
    Ok(((T::one() - s) * half, g.into_iter().map(|v| -v * half).collect()))
}

pub fn d_ssim<T: Real>(a: &Image<T>, b: &Image<T>, params: &SsimParams) -> Result<T> {
    d_ssim_with_grad(a, b, params).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_image(v: f64, n: usize) -> Image<f64> {
        Image::filled(n, n, [v; 3])
    }

    #[test]
    fn identical_images_have_zero_dissimilarity() {
        let px: Vec<f64> = (0..16 * 16 * 3).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let img = Image::new(16, 16, px).unwrap();
        assert_eq!(d_ssim(&img, &img, &SsimParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn constant_images_match_luminance_formula() {
        let p = SsimParams::default();
        let (a, b) = (0.5, 0.7);
        let want = (2.0 * a * b + p.c1) / (a * a + b * b + p.c1);
        let got = ssim(&const_image(a, 13), &const_image(b, 13), &p).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn too_small_is_a_size_error() {
        let r = ssim(&const_image(0.1, 10), &const_image(0.1, 10), &SsimParams::default());
        assert!(matches!(r, Err(Error::Size(_))));
    }

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel::<f64>(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((k[0] - k[10]).abs() < 1e-18);
    }
}
