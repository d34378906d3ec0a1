use crate::error::Result;
use crate::renderer::camera::Vec3;
use crate::scalar::Real;
use crate::sparse_voxel::voxels::SparseVoxelTensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T> {
    /// Row in the target tensor.
    pub row: usize,
    pub linear: usize,
    pub distance: T,
}

/// Dense occupancy lookup over a target tensor's grid, searched in Chebyshev
/// shells around the query cell.
pub struct KnnIndex<'a, T: Real> {
    target: &'a SparseVoxelTensor<T>,
    slot: Vec<u32>,
}

const EMPTY: u32 = u32::MAX;

impl<'a, T: Real> KnnIndex<'a, T> {
    pub fn new(target: &'a SparseVoxelTensor<T>) -> Self {
        let mut slot = vec![EMPTY; target.spec.num_voxels()];
        for (row, &idx) in target.indices.iter().enumerate() {
            slot[target.spec.linear(idx)] = row as u32;
        }
        Self { target, slot }
    }

    /// The `k` occupied voxels nearest to `center`, ascending by distance with
    /// ties broken by linearized index; fewer if the target has fewer.
    pub fn query(&self, center: Vec3<T>, k: usize) -> Vec<Neighbor<T>> {
        let t = self.target;
        let spec = &t.spec;
        if k == 0 || t.is_empty() {
            return Vec::new();
        }
        let dist = |idx: [usize; 3]| {
            let c = spec.center(idx);
            (0..3).map(|a| (c[a] - center[a]).powi(2)).sum::<T>().sqrt()
        };
        if t.len() <= k {
            return self.finish(t.indices.iter().map(|&i| self.neighbor(i, dist(i))).collect(), k);
        }
        // Query cell clamped into the grid, and the query's distance to that cell.
        let vs = spec.voxel_size;
        let mut q0 = [0i64; 3];
        let mut off2 = T::zero();
        for a in 0..3 {
            let f = ((center[a] - spec.origin[a]) / vs).floor();
            let hi = spec.dims[a] as i64 - 1;
            let ci = f.to_i64().unwrap_or(if f > T::zero() { hi } else { 0 }).clamp(0, hi);
            q0[a] = ci;
            let lo_edge = spec.origin[a] + T::of(ci as f64) * vs;
            let gap = (lo_edge - center[a]).max(center[a] - (lo_edge + vs)).max(T::zero());
            off2 = off2 + gap * gap;
        }
        let off = off2.sqrt();
        let max_r = (0..3).map(|a| q0[a].max(spec.dims[a] as i64 - 1 - q0[a])).max().unwrap_or(0);
        let mut found: Vec<Neighbor<T>> = Vec::new();
        for r in 0..=max_r {
            self.shell(q0, r, |idx| found.push(self.neighbor(idx, dist(idx))));
            if found.len() >= k && r < max_r {
                found = self.finish(found, k);
                let next_bound = (T::of(r as f64 + 0.5)) * vs - off;
                if found[k - 1].distance < next_bound {
                    return found;
                }
            }
        }
        self.finish(found, k)
    }

    fn neighbor(&self, idx: [usize; 3], distance: T) -> Neighbor<T> {
        let linear = self.target.spec.linear(idx);
        Neighbor { row: self.slot[linear] as usize, linear, distance }
    }

    fn finish(&self, mut v: Vec<Neighbor<T>>, k: usize) -> Vec<Neighbor<T>> {
        v.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap_or(std::cmp::Ordering::Equal).then(a.linear.cmp(&b.linear)));
        v.truncate(k);
        v
    }

    /// Visits occupied voxels at Chebyshev distance exactly `r` from `q0`.
    fn shell(&self, q0: [i64; 3], r: i64, mut visit: impl FnMut([usize; 3])) {
        let d = self.target.spec.dims;
        let lo = |a: usize| (q0[a] - r).max(0);
        let hi = |a: usize| (q0[a] + r).min(d[a] as i64 - 1);
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                let on_face = (z - q0[2]).abs() == r || (y - q0[1]).abs() == r;
                let xs: Vec<i64> = if on_face {
                    (lo(0)..=hi(0)).collect()
                } else {
                    [q0[0] - r, q0[0] + r].into_iter().filter(|&x| x >= 0 && x < d[0] as i64).collect()
                };
                for x in xs {
                    if r == 0 || on_face || (x - q0[0]).abs() == r {
                        let idx = [x as usize, y as usize, z as usize];
                        if self.slot[self.target.spec.linear(idx)] != EMPTY {
                            visit(idx);
                        }
                    }
                }
            }
        }
    }
}

/// One-shot convenience over [`KnnIndex`].
pub fn knn_nonzero<T: Real>(center: Vec3<T>, target: &SparseVoxelTensor<T>, k: usize) -> Result<Vec<Neighbor<T>>> {
    if k == 0 {
        return Err(crate::error::Error::Config("k must be ≥ 1".into()));
    }
    Ok(KnnIndex::new(target).query(center, k))
}

/// Exhaustive reference used to validate the shell search.
pub fn knn_brute_force<T: Real>(center: Vec3<T>, target: &SparseVoxelTensor<T>, k: usize) -> Vec<Neighbor<T>> {
    let mut all: Vec<Neighbor<T>> = target
        .indices
        .iter()
        .enumerate()
        .map(|(row, &idx)| {
            let c = target.spec.center(idx);
            let distance = (0..3).map(|a| (c[a] - center[a]).powi(2)).sum::<T>().sqrt();
            Neighbor { row, linear: target.spec.linear(idx), distance }
        })
        .collect();
    all.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap().then(a.linear.cmp(&b.linear)));
    all.truncate(k);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;
    use crate::sparse_voxel::grid::VoxelGridSpec;
    use crate::sparse_voxel::voxels::Modality;

    fn tensor(idx: Vec<[usize; 3]>) -> SparseVoxelTensor<f64> {
        let spec = VoxelGridSpec::new([0.0; 3], 1.0, [5, 5, 5]).unwrap();
        let mut idx = idx;
        idx.sort_by_key(|&i| spec.linear(i));
        let n = idx.len();
        SparseVoxelTensor::new(spec, Modality::Lidar, idx, Tensor::full(&[n, 2], 1.0)).unwrap()
    }

    #[test]
    fn query_at_occupied_center() {
        let t = tensor(vec![[1, 1, 1], [3, 3, 3]]);
        let r = knn_nonzero([1.5, 1.5, 1.5], &t, 1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].linear, t.spec.linear([1, 1, 1]));
        assert_eq!(r[0].distance, 0.0);
    }

    #[test]
    fn ties_prefer_lower_linear_index() {
        let t = tensor(vec![[0, 2, 2], [4, 2, 2], [2, 2, 2]]);
        let r = knn_nonzero([2.5, 2.5, 2.5], &t, 3).unwrap();
        assert_eq!(r[1].linear, t.spec.linear([0, 2, 2]));
        assert_eq!(r[2].linear, t.spec.linear([4, 2, 2]));
    }

    #[test]
    fn fewer_than_k() {
        let t = tensor(vec![[0, 0, 0]]);
        assert_eq!(knn_nonzero([4.0, 4.0, 4.0], &t, 4).unwrap().len(), 1);
        let e = SparseVoxelTensor::empty(t.spec, Modality::Image, 2);
        assert!(knn_nonzero([0.0; 3], &e, 4).unwrap().is_empty());
    }

    #[test]
    fn query_outside_grid() {
        let t = tensor(vec![[0, 0, 0], [4, 4, 4], [2, 0, 0], [0, 3, 1]]);
        for q in [[-3.0, 9.0, 0.2], [12.0, 12.0, 12.0], [2.5, -7.0, 2.5]] {
            assert_eq!(knn_nonzero(q, &t, 2).unwrap(), knn_brute_force(q, &t, 2));
        }
    }
}
