use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Mat3<T> = [[T; 3]; 3];
pub type Vec3<T> = [T; 3];

/// Pinhole camera; `r`/`t` map world to camera coordinates (x right, y down,
/// z forward).
#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub r: Mat3<T>,
    pub t: Vec3<T>,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Camera<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(fx: T, fy: T, cx: T, cy: T, r: Mat3<T>, t: Vec3<T>, width: usize, height: usize) -> Result<Self> {
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(Error::Config(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        let rrt = mat_mul(&r, &transpose(&r));
        for (i, row) in rrt.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let want = if i == j { T::one() } else { T::zero() };
                if (v - want).abs() > T::of(1e-9) {
                    return Err(Error::Config("camera rotation is not orthonormal".into()));
                }
            }
        }
        Ok(Self { fx, fy, cx, cy, r, t, width, height })
    }

    /// Camera at `eye` looking at `target`, with `up` the world up direction.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, up: Vec3<T>, fov_x: T, width: usize, height: usize) -> Result<Self> {
        let f = normalize(sub(target, eye));
        let right = normalize(cross(f, up));
        let down = cross(f, right);
        let r = [right, down, f];
        let t = neg(mat_vec(&r, eye));
        let fx = T::of_usize(width) * T::of(0.5) / (fov_x * T::of(0.5)).tan();
        let cx = T::of_usize(width) * T::of(0.5);
        let cy = T::of_usize(height) * T::of(0.5);
        Self::new(fx, fx, cx, cy, r, t, width, height)
    }

    pub fn to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        add(mat_vec(&self.r, p), self.t)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        neg(mat_vec(&transpose(&self.r), self.t))
    }

    /// World point seen at pixel coordinates `(u, v)` and camera depth `z`.
    pub fn unproject(&self, u: T, v: T, z: T) -> Vec3<T> {
        let pc = [(u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z];
        mat_vec(&transpose(&self.r), sub(pc, self.t))
    }

    /// Unit world-space direction of the ray through pixel `(u, v)`.
    pub fn ray_direction(&self, u: T, v: T) -> Vec3<T> {
        let d = [(u - self.cx) / self.fx, (v - self.cy) / self.fy, T::one()];
        normalize(mat_vec(&transpose(&self.r), d))
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        let c = |x: T| U::of(x.to_f64_lossy());
        Camera {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            r: self.r.map(|row| row.map(c)),
            t: self.t.map(c),
            width: self.width,
            height: self.height,
        }
    }
}

pub fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut o = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    o
}

pub fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut o = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = a[j][i];
        }
    }
    o
}

pub fn mat_vec<T: Real>(a: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

pub fn add<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn neg<T: Real>(a: Vec3<T>) -> Vec3<T> {
    [-a[0], -a[1], -a[2]]
}

pub fn dot<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm<T: Real>(a: Vec3<T>) -> T {
    dot(a, a).sqrt()
}

pub fn normalize<T: Real>(a: Vec3<T>) -> Vec3<T> {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_is_orthonormal_and_centered() {
        let cam = Camera::<f64>::look_at([5.0, 1.0, 2.0], [0.0, 0.0, 0.5], [0.0, 0.0, 1.0], 1.0, 32, 24).unwrap();
        let c = cam.center();
        for i in 0..3 {
            assert!((c[i] - [5.0, 1.0, 2.0][i]).abs() < 1e-12);
        }
        let pc = cam.to_camera([0.0, 0.0, 0.5]);
        assert!(pc[0].abs() < 1e-12 && pc[1].abs() < 1e-12 && pc[2] > 0.0);
    }

    #[test]
    fn unproject_inverts_projection() {
        let cam = Camera::<f64>::look_at([3.0, -4.0, 1.5], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1.2, 40, 30).unwrap();
        let p = [0.3, -0.2, 0.4];
        let pc = cam.to_camera(p);
        let u = cam.fx * pc[0] / pc[2] + cam.cx;
        let v = cam.fy * pc[1] / pc[2] + cam.cy;
        let back = cam.unproject(u, v, pc[2]);
        for i in 0..3 {
            assert!((back[i] - p[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_rotation() {
        let r = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Camera::<f64>::new(10.0, 10.0, 5.0, 5.0, r, [0.0; 3], 10, 10).is_err());
    }
}
