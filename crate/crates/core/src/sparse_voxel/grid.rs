use crate::error::{Error, Result};
use crate::renderer::camera::Vec3;
use crate::scalar::Real;

/// Axis-aligned voxel lattice anchored at `origin` (its minimum corner).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGridSpec<T> {
    pub origin: Vec3<T>,
    pub voxel_size: T,
    pub dims: [usize; 3],
}

impl<T: Real> VoxelGridSpec<T> {
    pub fn new(origin: Vec3<T>, voxel_size: T, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > T::zero()) || !voxel_size.is_finite() {
            return Err(Error::Config(format!("voxel_size must be positive, got {voxel_size}")));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("grid dims must be ≥ 1, got {dims:?}")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(Self { origin, voxel_size, dims })
    }

    pub fn num_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    /// X-fastest linearization.
    pub fn linear(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    pub fn unlinear(&self, lin: usize) -> [usize; 3] {
        let x = lin % self.dims[0];
        let r = lin / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    pub fn center(&self, idx: [usize; 3]) -> Vec3<T> {
        let h = T::of(0.5);
        std::array::from_fn(|a| self.origin[a] + (T::of_usize(idx[a]) + h) * self.voxel_size)
    }

    pub fn max_corner(&self) -> Vec3<T> {
        std::array::from_fn(|a| self.origin[a] + T::of_usize(self.dims[a]) * self.voxel_size)
    }

    /// Voxel holding `p`, treating the grid as a closed box: points on the
    /// upper faces belong to the last layer. `None` outside.
    pub fn index_of(&self, p: Vec3<T>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = (p[a] - self.origin[a]) / self.voxel_size;
            if !(f >= T::zero()) || f > T::of_usize(self.dims[a]) {
                return None;
            }
            out[a] = f.floor().to_usize().unwrap_or(usize::MAX).min(self.dims[a] - 1);
        }
        Some(out)
    }

    pub fn cast<U: Real>(&self) -> VoxelGridSpec<U> {
        VoxelGridSpec {
            origin: self.origin.map(|v| U::of(v.to_f64_lossy())),
            voxel_size: U::of(self.voxel_size.to_f64_lossy()),
            dims: self.dims,
        }
    }
}
