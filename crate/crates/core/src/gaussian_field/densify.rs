use crate::diffcore::ops::sigmoid;
use crate::gaussian_field::primitive::{quat_to_mat, GaussianField, GaussianPrimitive, Provenance};
use crate::renderer::camera::Vec3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
pub struct DensifyConfig<T> {
    /// Minimum position-gradient norm that triggers growth.
    pub grad_threshold: T,
    /// Largest world-space scale above which a primitive splits instead of cloning.
    pub scale_threshold: T,
    pub min_opacity: T,
    pub voxel_size: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DensifyStats {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Split children shrink by this factor.
const SPLIT_SHRINK: f64 = 1.6;

/// Clone small, split large, prune transparent. Surviving primitives keep
/// their order and anchor; split children take the parent's place, clones go
/// to the end. Both carry no anchor.
pub fn densify<T: Real>(field: &GaussianField<T>, pos_grads: &[Vec3<T>], cfg: &DensifyConfig<T>) -> (GaussianField<T>, DensifyStats) {
    assert_eq!(pos_grads.len(), field.len(), "one position gradient per primitive");
    let mut out = GaussianField::default();
    let mut clones = Vec::new();
    let mut stats = DensifyStats::default();
    let half = T::of(0.5);
    for (i, g) in field.primitives.iter().enumerate() {
        if sigmoid(g.opacity_logit) < cfg.min_opacity {
            stats.pruned += 1;
            continue;
        }
        let grad = pos_grads[i];
        let norm = (grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]).sqrt();
        if !(norm > cfg.grad_threshold) || !norm.is_finite() {
            out.push(*g, field.provenance[i], field.anchor[i]);
            continue;
        }
        let s = g.scale();
        let axis = (0..3).fold(0, |b, a| if s[a] > s[b] { a } else { b });
        if s[axis] > cfg.scale_threshold {
            let r = quat_to_mat(g.unit_rot());
            let dir: Vec3<T> = [r[0][axis], r[1][axis], r[2][axis]];
            let shrink = T::of(SPLIT_SHRINK).ln();
            for sign in [-T::one(), T::one()] {
                let mut child = *g;
                for a in 0..3 {
                    child.mu[a] = g.mu[a] + sign * half * s[axis] * dir[a];
                    child.log_scale[a] = g.log_scale[a] - shrink;
                }
                out.push(child, Provenance::Densified, None);
            }
            stats.split += 1;
        } else {
            out.push(*g, field.provenance[i], field.anchor[i]);
            let step = cfg.voxel_size * T::of(0.25) / norm;
            let mut copy: GaussianPrimitive<T> = *g;
            for a in 0..3 {
                copy.mu[a] = g.mu[a] + grad[a] * step;
            }
            clones.push(copy);
            stats.cloned += 1;
        }
    }
    for c in clones {
        out.push(c, Provenance::Densified, None);
    }
    (out, stats)
}
