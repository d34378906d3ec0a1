use std::collections::{BTreeMap, HashSet};

use crate::adaptive_fusion::FusedVoxelTensor;
use crate::error::{Error, Result};
use crate::gaussian_field::primitive::Provenance;
use crate::renderer::camera::Vec3;
use crate::scalar::Real;
use crate::sparse_voxel::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor<T> {
    pub position: Vec3<T>,
    pub kind: Provenance,
}

/// Point anchors (one representative point per occupied voxel, the point
/// nearest that voxel's centroid) followed by centers of fused voxels whose
/// feature norm exceeds `norm_threshold`. A voxel anchor is dropped when a
/// point anchor lies in its cell (within `voxel_size/2` per axis).
pub fn collect_anchors<T: Real>(pc: &PointCloud<T>, fused: &FusedVoxelTensor<T>, norm_threshold: T) -> Result<Vec<Anchor<T>>> {
    if !(norm_threshold >= T::zero()) {
        return Err(Error::Config(format!("norm threshold must be ≥ 0, got {norm_threshold}")));
    }
    let spec = &fused.spec;
    let cell = |p: Vec3<T>| -> [i64; 3] {
        std::array::from_fn(|a| ((p[a] - spec.origin[a]) / spec.voxel_size).floor().to_i64().unwrap_or(i64::MAX))
    };
    // Keyed (z, y, x) so iteration follows the grid's linear order.
    let mut buckets: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in pc.points.iter().enumerate() {
        let c = cell(p.position);
        buckets.entry([c[2], c[1], c[0]]).or_default().push(i);
    }
    let mut anchors = Vec::new();
    for members in buckets.values() {
        let n = T::of_usize(members.len());
        let centroid: Vec3<T> = std::array::from_fn(|a| members.iter().map(|&i| pc.points[i].position[a]).sum::<T>() / n);
        let d2 = |i: usize| (0..3).map(|a| (pc.points[i].position[a] - centroid[a]).powi(2)).sum::<T>();
        let mut best = members[0];
        for &i in &members[1..] {
            if d2(i) < d2(best) {
                best = i;
            }
        }
        anchors.push(Anchor { position: pc.points[best].position, kind: Provenance::PointAnchor });
    }
    let half = spec.voxel_size * T::of(0.5);
    let taken: HashSet<[i64; 3]> = buckets.keys().map(|k| [k[2], k[1], k[0]]).collect();
    for (r, idx) in fused.indices.iter().enumerate() {
        let norm = fused.features.row(r).iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm > norm_threshold) {
            continue;
        }
        let center = spec.center(*idx);
        let own = [idx[0] as i64, idx[1] as i64, idx[2] as i64];
        // Points on a shared face sit in the neighbor's bucket but are still
        // within half a voxel of this center.
        let near_point = taken.contains(&own)
            || anchors
                .iter()
                .filter(|a| a.kind == Provenance::PointAnchor)
                .any(|a| (0..3).all(|ax| (a.position[ax] - center[ax]).abs() <= half));
        if !near_point {
            anchors.push(Anchor { position: center, kind: Provenance::VoxelAnchor });
        }
    }
    if anchors.is_empty() {
        return Err(Error::Init("no anchors: empty point cloud and no fused voxel above the norm threshold".into()));
    }
    Ok(anchors)
}
