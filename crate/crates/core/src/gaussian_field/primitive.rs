use crate::diffcore::{Parameter, Tensor};
use crate::diffcore::ops::sigmoid;
use crate::error::{Error, Result};
use crate::renderer::camera::{Mat3, Vec3};
use crate::scalar::Real;

/// One anisotropic Gaussian; every field is stored pre-activation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPrimitive<T: Real> {
    pub mu: Vec3<T>,
    pub log_scale: Vec3<T>,
    /// Quaternion `(w, x, y, z)`.
    pub rot: [T; 4],
    pub opacity_logit: T,
    /// Color logits; the rendered color is `sigmoid(color)`.
    pub color: Vec3<T>,
}

/// Raw parameter count per primitive.
pub const PARAMS_PER_PRIMITIVE: usize = 14;

impl<T: Real> GaussianPrimitive<T> {
    pub fn scale(&self) -> Vec3<T> {
        self.log_scale.map(T::exp)
    }

    pub fn opacity(&self) -> T {
        sigmoid(self.opacity_logit)
    }

    pub fn rgb(&self) -> Vec3<T> {
        self.color.map(sigmoid)
    }

    pub fn unit_rot(&self) -> [T; 4] {
        normalize_quat(self.rot)
    }

    /// `R(q)·diag(exp(2·log_scale))·R(q)ᵀ`.
    pub fn covariance(&self) -> Mat3<T> {
        let r = quat_to_mat(self.unit_rot());
        let s = self.scale();
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| r[i][k] * s[k] * s[k] * r[j][k]).sum();
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.raw().iter().all(|v| v.is_finite())
    }

    /// Flattened `[mu, log_scale, rot, opacity_logit, color]`.
    pub fn raw(&self) -> [T; PARAMS_PER_PRIMITIVE] {
        let mut out = [T::zero(); PARAMS_PER_PRIMITIVE];
        out[0..3].copy_from_slice(&self.mu);
        out[3..6].copy_from_slice(&self.log_scale);
        out[6..10].copy_from_slice(&self.rot);
        out[10] = self.opacity_logit;
        out[11..14].copy_from_slice(&self.color);
        out
    }

    pub fn from_raw(r: &[T]) -> Self {
        Self {
            mu: [r[0], r[1], r[2]],
            log_scale: [r[3], r[4], r[5]],
            rot: [r[6], r[7], r[8], r[9]],
            opacity_logit: r[10],
            color: [r[11], r[12], r[13]],
        }
    }
}

pub fn normalize_quat<T: Real>(q: [T; 4]) -> [T; 4] {
    let n = q.iter().map(|&v| v * v).sum::<T>().sqrt();
    q.map(|v| v / n)
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_mat<T: Real>(q: [T; 4]) -> Mat3<T> {
    let [w, x, y, z] = q;
    let one = T::one();
    let two = T::of(2.0);
    [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ]
}

/// Pulls a gradient on the rotation matrix back to the unit quaternion.
pub fn quat_to_mat_vjp<T: Real>(q: [T; 4], d: &Mat3<T>) -> [T; 4] {
    let [w, x, y, z] = q;
    let two = T::of(2.0);
    let dw = two * (-z * d[0][1] + y * d[0][2] + z * d[1][0] - x * d[1][2] - y * d[2][0] + x * d[2][1]);
    let dx = two
        * (y * d[0][1] + z * d[0][2] + y * d[1][0] - two * x * d[1][1] - w * d[1][2] + z * d[2][0] + w * d[2][1]
            - two * x * d[2][2]);
    let dy = two
        * (-two * y * d[0][0] + x * d[0][1] + w * d[0][2] + x * d[1][0] + z * d[1][2] - w * d[2][0] + z * d[2][1]
            - two * y * d[2][2]);
    let dz = two
        * (-two * z * d[0][0] - w * d[0][1] + x * d[0][2] + w * d[1][0] - two * z * d[1][1] + y * d[1][2]
            + x * d[2][0]
            + y * d[2][1]);
    [dw, dx, dy, dz]
}

/// Pulls a gradient on `q / |q|` back to `q`.
pub fn normalize_quat_vjp<T: Real>(q: [T; 4], d_unit: [T; 4]) -> [T; 4] {
    let n = q.iter().map(|&v| v * v).sum::<T>().sqrt();
    let u = q.map(|v| v / n);
    let proj: T = (0..4).map(|i| u[i] * d_unit[i]).sum();
    [0, 1, 2, 3].map(|i| (d_unit[i] - u[i] * proj) / n)
}

/// Where a primitive came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    PointAnchor,
    VoxelAnchor,
    Densified,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::PointAnchor => "point_anchor",
            Provenance::VoxelAnchor => "voxel_anchor",
            Provenance::Densified => "densified",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "point_anchor" => Ok(Provenance::PointAnchor),
            "voxel_anchor" => Ok(Provenance::VoxelAnchor),
            "densified" => Ok(Provenance::Densified),
            other => Err(Error::Parse(format!("unknown provenance `{other}`"))),
        }
    }
}

/// Gaussian primitives with their provenance.
///
/// `anchor` maps each primitive back to the anchor that seeded it; densified
/// primitives have none and never enter the parameter-consistency loss.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianField<T: Real> {
    pub primitives: Vec<GaussianPrimitive<T>>,
    pub provenance: Vec<Provenance>,
    pub anchor: Vec<Option<usize>>,
}

impl<T: Real> Default for GaussianField<T> {
    fn default() -> Self {
        Self { primitives: Vec::new(), provenance: Vec::new(), anchor: Vec::new() }
    }
}

impl<T: Real> GaussianField<T> {
    pub fn new(primitives: Vec<GaussianPrimitive<T>>, provenance: Vec<Provenance>) -> Self {
        let anchor = provenance
            .iter()
            .enumerate()
            .map(|(i, p)| (*p != Provenance::Densified).then_some(i))
            .collect();
        Self { primitives, provenance, anchor }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn push(&mut self, g: GaussianPrimitive<T>, prov: Provenance, anchor: Option<usize>) {
        self.primitives.push(g);
        self.provenance.push(prov);
        self.anchor.push(anchor);
    }

    pub fn renormalize_rotations(&mut self) {
        for g in &mut self.primitives {
            g.rot = normalize_quat(g.rot);
        }
    }

    /// Splits the field into the five parameter groups `(mu, log_scale, rot,
    /// opacity_logit, color)` with shapes N×3, N×3, N×4, N×1, N×3.
    pub fn to_tensors(&self) -> [Tensor<T>; 5] {
        let n = self.len();
        let mut mu = Vec::with_capacity(n * 3);
        let mut ls = Vec::with_capacity(n * 3);
        let mut rot = Vec::with_capacity(n * 4);
        let mut op = Vec::with_capacity(n);
        let mut col = Vec::with_capacity(n * 3);
        for g in &self.primitives {
            mu.extend(g.mu);
            ls.extend(g.log_scale);
            rot.extend(g.rot);
            op.push(g.opacity_logit);
            col.extend(g.color);
        }
        [
            Tensor::new(&[n, 3], mu).expect("n×3"),
            Tensor::new(&[n, 3], ls).expect("n×3"),
            Tensor::new(&[n, 4], rot).expect("n×4"),
            Tensor::new(&[n, 1], op).expect("n×1"),
            Tensor::new(&[n, 3], col).expect("n×3"),
        ]
    }

    /// Overwrites primitive values from the five parameter groups.
    pub fn set_from_tensors(&mut self, t: &[Tensor<T>; 5]) -> Result<()> {
        let n = self.len();
        let widths = [3, 3, 4, 1, 3];
        for (tensor, w) in t.iter().zip(widths) {
            if tensor.shape() != [n, w] {
                return Err(Error::dim(format!("expected {n}x{w}, got {:?}", tensor.shape())));
            }
        }
        for (i, g) in self.primitives.iter_mut().enumerate() {
            g.mu.copy_from_slice(t[0].row(i));
            g.log_scale.copy_from_slice(t[1].row(i));
            g.rot.copy_from_slice(t[2].row(i));
            g.opacity_logit = t[3].row(i)[0];
            g.color.copy_from_slice(t[4].row(i));
        }
        Ok(())
    }

    /// The five parameter groups as named optimizer parameters.
    pub fn to_parameters(&self) -> [Parameter<T>; 5] {
        let [mu, ls, rot, op, col] = self.to_tensors();
        [
            Parameter::new("gaussian.mu", mu),
            Parameter::new("gaussian.log_scale", ls),
            Parameter::new("gaussian.rot", rot),
            Parameter::new("gaussian.opacity_logit", op),
            Parameter::new("gaussian.color", col),
        ]
    }
}
