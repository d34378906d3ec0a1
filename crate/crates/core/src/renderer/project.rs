//! EWA projection of a 3D Gaussian to a screen-space splat, and its adjoint.

use crate::diffcore::ops::sigmoid;
use crate::gaussian_field::primitive::{normalize_quat_vjp, quat_to_mat, quat_to_mat_vjp, GaussianPrimitive};
use crate::renderer::camera::{mat_vec, transpose, Camera, Mat3, Vec3};
use crate::scalar::Real;

/// Added to the screen-space covariance diagonal (pixels²).
pub const DILATION: f64 = 0.3;

pub type Mat2<T> = [[T; 2]; 2];

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D<T: Real> {
    pub mean2d: [T; 2],
    pub cov2d: Mat2<T>,
    pub conic: Mat2<T>,
    pub depth: T,
    pub color: Vec3<T>,
    pub alpha: T,
    /// Half-width of the 3σ bounding box, in pixels.
    pub radius: T,
}

/// Jacobian of the pinhole projection at camera-space point `m`.
fn projection_jacobian<T: Real>(cam: &Camera<T>, m: Vec3<T>) -> [[T; 3]; 2] {
    let iz = T::one() / m[2];
    let iz2 = iz * iz;
    [
        [cam.fx * iz, T::zero(), -cam.fx * m[0] * iz2],
        [T::zero(), cam.fy * iz, -cam.fy * m[1] * iz2],
    ]
}

/// `T = J·W` (2×3).
fn jw<T: Real>(j: &[[T; 3]; 2], w: &Mat3<T>) -> [[T; 3]; 2] {
    let mut o = [[T::zero(); 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            o[a][b] = (0..3).map(|k| j[a][k] * w[k][b]).sum();
        }
    }
    o
}

fn sandwich<T: Real>(t: &[[T; 3]; 2], s: &Mat3<T>) -> Mat2<T> {
    let mut o = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = T::zero();
            for i in 0..3 {
                for k in 0..3 {
                    acc = acc + t[a][i] * s[i][k] * t[b][k];
                }
            }
            o[a][b] = acc;
        }
    }
    o
}

pub fn inverse2<T: Real>(c: &Mat2<T>) -> Mat2<T> {
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]]
}

/// Projects `g` through `cam`; `None` when the mean is not beyond `near`.
pub fn project_gaussian<T: Real>(g: &GaussianPrimitive<T>, cam: &Camera<T>, near: T) -> Option<Splat2D<T>> {
    let m = cam.to_camera(g.mu);
    if m[2] <= near {
        return None;
    }
    let mean2d = [cam.fx * m[0] / m[2] + cam.cx, cam.fy * m[1] / m[2] + cam.cy];
    let j = projection_jacobian(cam, m);
    let t = jw(&j, &cam.r);
    let mut cov2d = sandwich(&t, &g.covariance());
    let dil = T::of(DILATION);
    cov2d[0][0] = cov2d[0][0] + dil;
    cov2d[1][1] = cov2d[1][1] + dil;
    // keep the off-diagonal exactly symmetric
    let off = (cov2d[0][1] + cov2d[1][0]) * T::of(0.5);
    cov2d[0][1] = off;
    cov2d[1][0] = off;
    let conic = inverse2(&cov2d);
    let mid = (cov2d[0][0] + cov2d[1][1]) * T::of(0.5);
    let det = cov2d[0][0] * cov2d[1][1] - off * off;
    let lambda_max = mid + (mid * mid - det).max(T::zero()).sqrt();
    let radius = (T::of(3.0) * lambda_max.sqrt()).ceil();
    Some(Splat2D { mean2d, cov2d, conic, depth: m[2], color: g.rgb(), alpha: g.opacity(), radius })
}

/// Gradient of a loss with respect to one splat's outputs.
#[derive(Clone, Copy, Debug)]
pub struct SplatGrad<T: Real> {
    pub mean2d: [T; 2],
    /// Full-matrix gradient on the conic (inverse screen covariance).
    pub conic: Mat2<T>,
    pub alpha: T,
    pub color: Vec3<T>,
}

impl<T: Real> Default for SplatGrad<T> {
    fn default() -> Self {
        Self { mean2d: [T::zero(); 2], conic: [[T::zero(); 2]; 2], alpha: T::zero(), color: [T::zero(); 3] }
    }
}

impl<T: Real> SplatGrad<T> {
    pub fn accumulate(&mut self, o: &SplatGrad<T>) {
        for i in 0..2 {
            self.mean2d[i] = self.mean2d[i] + o.mean2d[i];
            for j in 0..2 {
                self.conic[i][j] = self.conic[i][j] + o.conic[i][j];
            }
        }
        self.alpha = self.alpha + o.alpha;
        for c in 0..3 {
            self.color[c] = self.color[c] + o.color[c];
        }
    }
}

/// Adjoint of [`project_gaussian`]: gradient on the raw primitive fields,
/// flattened as `[mu(3), log_scale(3), rot(4), opacity_logit, color(3)]`.
pub fn project_backward<T: Real>(g: &GaussianPrimitive<T>, cam: &Camera<T>, splat: &Splat2D<T>, d: &SplatGrad<T>) -> [T; 14] {
    let m = cam.to_camera(g.mu);
    let (x, y, z) = (m[0], m[1], m[2]);
    let iz = T::one() / z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let two = T::of(2.0);

    // conic = cov2d⁻¹  ⇒  d cov2d = −K·dK·K
    let k = &splat.conic;
    let mut dcov = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = T::zero();
            for i in 0..2 {
                for l in 0..2 {
                    acc = acc + k[a][i] * d.conic[i][l] * k[l][b];
                }
            }
            dcov[a][b] = -acc;
        }
    }

    let unit = g.unit_rot();
    let rq = quat_to_mat(unit);
    let s = g.scale();
    // M = Rq·S, Σ = M·Mᵀ
    let mut mm = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            mm[i][j] = rq[i][j] * s[j];
        }
    }
    let sigma = g.covariance();
    let j = projection_jacobian(cam, m);
    let t = jw(&j, &cam.r);

    // cov2d = T Σ Tᵀ:  dT = dC·T·Σᵀ + dCᵀ·T·Σ,  dΣ = Tᵀ·dC·T
    let mut ts = [[T::zero(); 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            ts[a][b] = (0..3).map(|i| t[a][i] * sigma[i][b]).sum();
        }
    }
    let mut dt = [[T::zero(); 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            let mut acc = T::zero();
            for c in 0..2 {
                acc = acc + dcov[a][c] * ts[c][b] + dcov[c][a] * ts[c][b];
            }
            dt[a][b] = acc;
        }
    }
    let mut dsigma = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for l in 0..3 {
            let mut acc = T::zero();
            for a in 0..2 {
                for b in 0..2 {
                    acc = acc + t[a][i] * dcov[a][b] * t[b][l];
                }
            }
            dsigma[i][l] = acc;
        }
    }
    // T = J·W  ⇒  dJ = dT·Wᵀ
    let wt = transpose(&cam.r);
    let mut dj = [[T::zero(); 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            dj[a][b] = (0..3).map(|i| dt[a][i] * wt[i][b]).sum();
        }
    }

    let mut dm = [T::zero(); 3];
    // mean2d
    dm[0] = dm[0] + d.mean2d[0] * cam.fx * iz;
    dm[1] = dm[1] + d.mean2d[1] * cam.fy * iz;
    dm[2] = dm[2] - d.mean2d[0] * cam.fx * x * iz2 - d.mean2d[1] * cam.fy * y * iz2;
    // Jacobian entries
    dm[0] = dm[0] - dj[0][2] * cam.fx * iz2;
    dm[1] = dm[1] - dj[1][2] * cam.fy * iz2;
    dm[2] = dm[2] - dj[0][0] * cam.fx * iz2 + dj[0][2] * two * cam.fx * x * iz3 - dj[1][1] * cam.fy * iz2
        + dj[1][2] * two * cam.fy * y * iz3;
    let dmu = mat_vec(&wt, dm);

    // Σ = M·Mᵀ  ⇒  dM = (dΣ + dΣᵀ)·M
    let mut dmm = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for jj in 0..3 {
            dmm[i][jj] = (0..3).map(|l| (dsigma[i][l] + dsigma[l][i]) * mm[l][jj]).sum();
        }
    }
    let mut drq = [[T::zero(); 3]; 3];
    let mut dls = [T::zero(); 3];
    for jj in 0..3 {
        let mut ds = T::zero();
        for i in 0..3 {
            drq[i][jj] = dmm[i][jj] * s[jj];
            ds = ds + dmm[i][jj] * rq[i][jj];
        }
        dls[jj] = ds * s[jj];
    }
    let dunit = quat_to_mat_vjp(unit, &drq);
    let drot = normalize_quat_vjp(g.rot, dunit);

    let a = sigmoid(g.opacity_logit);
    let dop = d.alpha * a * (T::one() - a);
    let rgb = g.rgb();
    let dcol = [0, 1, 2].map(|c| d.color[c] * rgb[c] * (T::one() - rgb[c]));

    let mut out = [T::zero(); 14];
    out[0..3].copy_from_slice(&dmu);
    out[3..6].copy_from_slice(&dls);
    out[6..10].copy_from_slice(&drot);
    out[10] = dop;
    out[11..14].copy_from_slice(&dcol);
    out
}
