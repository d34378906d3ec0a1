//! Depth-ordered alpha compositing of projected splats and its adjoint.

use crate::diffcore::{Tape, Tensor, Var, Vjp};
use crate::error::{Error, Result};
use crate::gaussian_field::primitive::{GaussianField, GaussianPrimitive, PARAMS_PER_PRIMITIVE};
use crate::renderer::camera::{Camera, Vec3};
use crate::renderer::image::Image;
use crate::renderer::project::{project_backward, project_gaussian, Splat2D, SplatGrad};
use crate::scalar::Real;

/// Splats at or in front of this camera depth are culled (meters).
pub const NEAR_PLANE: f64 = 0.01;
/// Contributions with a smaller effective alpha are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// Compositing stops once transmittance would fall below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Accumulated alpha needed before a pixel reports a finite depth.
pub const DEPTH_ALPHA: f64 = 0.5;

#[derive(Clone, Copy, Debug)]
pub struct Contribution<T: Real> {
    /// Position in the depth-sorted splat list.
    pub splat: u32,
    /// Effective alpha after the Gaussian falloff.
    pub alpha: T,
    /// Transmittance in front of this splat.
    pub transmittance: T,
}

/// Everything the backward pass needs from a forward render.
#[derive(Clone, Debug)]
pub struct RasterAux<T: Real> {
    /// `(primitive index, splat)` in compositing order.
    pub sorted: Vec<(usize, Splat2D<T>)>,
    pub offsets: Vec<usize>,
    pub contributions: Vec<Contribution<T>>,
    /// Transmittance left for the background, per pixel.
    pub transmittance: Vec<T>,
    /// Alpha-weighted camera depth; infinite when the pixel is mostly background.
    pub depth: Vec<T>,
}

impl<T: Real> RasterAux<T> {
    pub fn pixel_contributions(&self, p: usize) -> &[Contribution<T>] {
        &self.contributions[self.offsets[p]..self.offsets[p + 1]]
    }
}

fn pixel_range<T: Real>(center: T, radius: T, size: usize) -> Option<(usize, usize)> {
    // pixel i has its center at i + 0.5
    let lo = (center - radius - T::of(0.5)).ceil();
    let hi = (center + radius - T::of(0.5)).floor();
    let max = T::of_usize(size) - T::one();
    if hi < T::zero() || lo > max || lo > hi {
        return None;
    }
    let lo = lo.max(T::zero()).to_usize().unwrap_or(0);
    let hi = hi.min(max).to_usize().unwrap_or(0);
    Some((lo, hi))
}

/// Projects and depth-sorts; ties broken by primitive index.
fn sorted_splats<T: Real>(prims: &[GaussianPrimitive<T>], cam: &Camera<T>) -> Vec<(usize, Splat2D<T>)> {
    let mut splats: Vec<(usize, Splat2D<T>)> = prims
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(g, cam, T::of(NEAR_PLANE)).map(|s| (i, s)))
        .collect();
    splats.sort_by(|a, b| a.1.depth.partial_cmp(&b.1.depth).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    splats
}

fn falloff<T: Real>(s: &Splat2D<T>, px: T, py: T) -> (T, T, T) {
    let dx = px - s.mean2d[0];
    let dy = py - s.mean2d[1];
    let k = &s.conic;
    let power = -T::of(0.5) * (k[0][0] * dx * dx + (k[0][1] + k[1][0]) * dx * dy + k[1][1] * dy * dy);
    (power, dx, dy)
}

/// Renders `prims` into `cam`, compositing front to back over `background`.
pub fn rasterize_primitives<T: Real>(prims: &[GaussianPrimitive<T>], cam: &Camera<T>, background: Vec3<T>) -> (Image<T>, RasterAux<T>) {
    let (w, h) = (cam.width, cam.height);
    let sorted = sorted_splats(prims, cam);
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); w * h];
    for (pos, (_, s)) in sorted.iter().enumerate() {
        let (Some((x0, x1)), Some((y0, y1))) = (pixel_range(s.mean2d[0], s.radius, w), pixel_range(s.mean2d[1], s.radius, h)) else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                lists[y * w + x].push(pos as u32);
            }
        }
    }

    let min_alpha = T::of(MIN_ALPHA);
    let min_t = T::of(MIN_TRANSMITTANCE);
    let mut image = Image::filled(w, h, [T::zero(); 3]);
    let mut offsets = Vec::with_capacity(w * h + 1);
    let mut contributions = Vec::new();
    let mut transmittance = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    offsets.push(0);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let (px, py) = (T::of_usize(x) + T::of(0.5), T::of_usize(y) + T::of(0.5));
            let mut t = T::one();
            let mut rgb = [T::zero(); 3];
            let mut zsum = T::zero();
            for &pos in &lists[p] {
                let s = &sorted[pos as usize].1;
                let (power, _, _) = falloff(s, px, py);
                if power > T::zero() {
                    continue;
                }
                let a = s.alpha * power.exp();
                if a < min_alpha {
                    continue;
                }
                let next = t * (T::one() - a);
                if next < min_t {
                    break;
                }
                for c in 0..3 {
                    rgb[c] = rgb[c] + s.color[c] * a * t;
                }
                zsum = zsum + s.depth * a * t;
                contributions.push(Contribution { splat: pos, alpha: a, transmittance: t });
                t = next;
            }
            for c in 0..3 {
                rgb[c] = rgb[c] + t * background[c];
            }
            image.set_pixel(x, y, rgb);
            let acc = T::one() - t;
            depth.push(if acc >= T::of(DEPTH_ALPHA) { zsum / acc } else { T::infinity() });
            transmittance.push(t);
            offsets.push(contributions.len());
        }
    }
    (image, RasterAux { sorted, offsets, contributions, transmittance, depth })
}

/// Renders a field; an empty field yields the background.
pub fn rasterize<T: Real>(field: &GaussianField<T>, cam: &Camera<T>, background: Vec3<T>) -> (Image<T>, RasterAux<T>) {
    rasterize_primitives(&field.primitives, cam, background)
}

/// Adjoint of the render: per-primitive gradients of the raw parameters given
/// `d_image` (same layout as the image pixels). The depth order is held fixed.
pub fn rasterize_backward<T: Real>(
    prims: &[GaussianPrimitive<T>],
    cam: &Camera<T>,
    background: Vec3<T>,
    aux: &RasterAux<T>,
    d_image: &[T],
) -> Vec<[T; PARAMS_PER_PRIMITIVE]> {
    let (w, h) = (cam.width, cam.height);
    let mut splat_grads = vec![SplatGrad::<T>::default(); aux.sorted.len()];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let contribs = aux.pixel_contributions(p);
            if contribs.is_empty() {
                continue;
            }
            let dc = [d_image[p * 3], d_image[p * 3 + 1], d_image[p * 3 + 2]];
            if dc.iter().all(|&v| v == T::zero()) {
                continue;
            }
            let (px, py) = (T::of_usize(x) + T::of(0.5), T::of_usize(y) + T::of(0.5));
            // color accumulated behind the current splat, including background
            let tf = aux.transmittance[p];
            let mut after = [tf * background[0], tf * background[1], tf * background[2]];
            for c in contribs.iter().rev() {
                let s = &aux.sorted[c.splat as usize].1;
                let (a, t) = (c.alpha, c.transmittance);
                let g = &mut splat_grads[c.splat as usize];
                let mut da = T::zero();
                for ch in 0..3 {
                    g.color[ch] = g.color[ch] + dc[ch] * a * t;
                    da = da + dc[ch] * (s.color[ch] * t - after[ch] / (T::one() - a));
                }
                for ch in 0..3 {
                    after[ch] = after[ch] + s.color[ch] * a * t;
                }
                // a = alpha · exp(power)
                let gauss = a / s.alpha;
                g.alpha = g.alpha + da * gauss;
                let dpower = da * a;
                let (_, dx, dy) = falloff(s, px, py);
                let k = &s.conic;
                let half = T::of(0.5);
                g.conic[0][0] = g.conic[0][0] - half * dpower * dx * dx;
                g.conic[0][1] = g.conic[0][1] - half * dpower * dx * dy;
                g.conic[1][0] = g.conic[1][0] - half * dpower * dy * dx;
                g.conic[1][1] = g.conic[1][1] - half * dpower * dy * dy;
                g.mean2d[0] = g.mean2d[0] + dpower * (k[0][0] * dx + half * (k[0][1] + k[1][0]) * dy);
                g.mean2d[1] = g.mean2d[1] + dpower * (k[1][1] * dy + half * (k[0][1] + k[1][0]) * dx);
            }
        }
    }
    let mut out = vec![[T::zero(); PARAMS_PER_PRIMITIVE]; prims.len()];
    for ((idx, splat), g) in aux.sorted.iter().zip(&splat_grads) {
        let d = project_backward(&prims[*idx], cam, splat, g);
        for k in 0..PARAMS_PER_PRIMITIVE {
            out[*idx][k] = out[*idx][k] + d[k];
        }
    }
    out
}

struct RasterizeOp<T: Real> {
    cam: Camera<T>,
    background: Vec3<T>,
    prims: Vec<GaussianPrimitive<T>>,
    aux: RasterAux<T>,
}

impl<T: Real> Vjp<T> for RasterizeOp<T> {
    fn name(&self) -> &'static str {
        "rasterize"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _out: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let grads = rasterize_backward(&self.prims, &self.cam, self.background, &self.aux, g.data());
        let n = self.prims.len();
        let mut groups = [
            Vec::with_capacity(n * 3),
            Vec::with_capacity(n * 3),
            Vec::with_capacity(n * 4),
            Vec::with_capacity(n),
            Vec::with_capacity(n * 3),
        ];
        for d in &grads {
            groups[0].extend_from_slice(&d[0..3]);
            groups[1].extend_from_slice(&d[3..6]);
            groups[2].extend_from_slice(&d[6..10]);
            groups[3].push(d[10]);
            groups[4].extend_from_slice(&d[11..14]);
        }
        let widths = [3, 3, 4, 1, 3];
        groups
            .into_iter()
            .zip(widths)
            .map(|(data, w)| Some(Tensor::new(&[n, w], data).expect("group shape")))
            .collect()
    }
}

/// Records a render on the tape. `params` are the five parameter groups
/// `(mu N×3, log_scale N×3, rot N×4, opacity_logit N×1, color N×3)`; the
/// output is an `H×W×3` tensor.
pub fn rasterize_op<T: Real>(tape: &mut Tape<T>, params: [Var; 5], cam: &Camera<T>, background: Vec3<T>) -> Result<(Var, RasterAux<T>)> {
    let n = tape.value(params[0]).rows();
    let widths = [3, 3, 4, 1, 3];
    for (v, w) in params.iter().zip(widths) {
        if tape.value(*v).shape() != [n, w] {
            return Err(Error::dim(format!("gaussian group {:?}, expected {n}x{w}", tape.value(*v).shape())));
        }
    }
    let prims: Vec<GaussianPrimitive<T>> = (0..n)
        .map(|i| {
            let mut raw = [T::zero(); PARAMS_PER_PRIMITIVE];
            raw[0..3].copy_from_slice(tape.value(params[0]).row(i));
            raw[3..6].copy_from_slice(tape.value(params[1]).row(i));
            raw[6..10].copy_from_slice(tape.value(params[2]).row(i));
            raw[10] = tape.value(params[3]).row(i)[0];
            raw[11..14].copy_from_slice(tape.value(params[4]).row(i));
            GaussianPrimitive::from_raw(&raw)
        })
        .collect();
    let (img, aux) = rasterize_primitives(&prims, cam, background);
    let out = Tensor::new(&[cam.height, cam.width, 3], img.pixels)?;
    let var = tape.push(&params, out, RasterizeOp { cam: cam.clone(), background, prims, aux: aux.clone() });
    Ok((var, aux))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: usize, h: usize) -> Camera<f64> {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        Camera::new(20.0, 20.0, w as f64 / 2.0, h as f64 / 2.0, id, [0.0; 3], w, h).unwrap()
    }

    fn splat_at(x: f64, y: f64, z: f64, sigma: f64, op_logit: f64, color: [f64; 3]) -> GaussianPrimitive<f64> {
        GaussianPrimitive { mu: [x, y, z], log_scale: [sigma.ln(); 3], rot: [1.0, 0.0, 0.0, 0.0], opacity_logit: op_logit, color }
    }

    #[test]
    fn empty_field_renders_background() {
        let (img, aux) = rasterize(&GaussianField::default(), &cam(8, 6), [0.2, 0.3, 0.4]);
        assert!(img.pixels.chunks(3).all(|p| p == [0.2, 0.3, 0.4]));
        assert!(aux.depth.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn transmittance_is_monotone_and_bounded() {
        let prims = vec![
            splat_at(0.0, 0.0, 2.0, 0.2, 0.5, [0.0; 3]),
            splat_at(0.05, 0.0, 3.0, 0.3, 1.0, [1.0; 3]),
            splat_at(-0.1, 0.1, 2.5, 0.25, -0.5, [0.5; 3]),
        ];
        let (_, aux) = rasterize_primitives(&prims, &cam(16, 16), [0.0; 3]);
        for p in 0..256 {
            let c = aux.pixel_contributions(p);
            let mut prev = 1.0;
            for k in c {
                assert!(k.transmittance <= prev && k.transmittance >= 0.0);
                prev = k.transmittance;
            }
            assert!(aux.transmittance[p] <= prev && aux.transmittance[p] >= 0.0);
        }
    }
}
