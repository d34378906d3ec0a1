use std::collections::BTreeMap;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::renderer::camera::Vec3;
use crate::renderer::{Camera, Image};
use crate::scalar::Real;
use crate::sparse_voxel::grid::VoxelGridSpec;
use crate::sparse_voxel::points::PointCloud;

/// Channels written by the fixed featurizers before zero padding.
pub const LIDAR_FEATURES: usize = 5;
pub const IMAGE_FEATURES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Image,
    Lidar,
    Fused,
}

/// Occupied voxels of one modality. Row `i` of `features` belongs to
/// `indices[i]`; rows are ordered by linearized index.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVoxelTensor<T: Real> {
    pub spec: VoxelGridSpec<T>,
    pub modality: Modality,
    pub indices: Vec<[usize; 3]>,
    pub features: Tensor<T>,
}

impl<T: Real> SparseVoxelTensor<T> {
    pub fn new(spec: VoxelGridSpec<T>, modality: Modality, indices: Vec<[usize; 3]>, features: Tensor<T>) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != indices.len() {
            return Err(Error::dim(format!("{} indices for features {:?}", indices.len(), features.shape())));
        }
        let mut prev = None;
        for (i, idx) in indices.iter().enumerate() {
            if (0..3).any(|a| idx[a] >= spec.dims[a]) {
                return Err(Error::Range(format!("voxel index {idx:?} outside dims {:?}", spec.dims)));
            }
            let lin = spec.linear(*idx);
            if prev.is_some_and(|p| p >= lin) {
                return Err(Error::Consistency("voxel indices must be unique and sorted".into()));
            }
            prev = Some(lin);
            if features.row(i).iter().all(|v| *v == T::zero()) {
                return Err(Error::Consistency(format!("zero feature stored at {idx:?}")));
            }
        }
        Ok(Self { spec, modality, indices, features })
    }

    pub fn empty(spec: VoxelGridSpec<T>, modality: Modality, channels: usize) -> Self {
        Self { spec, modality, indices: Vec::new(), features: Tensor::zeros(&[0, channels]) }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }

    pub fn linear_indices(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| self.spec.linear(i)).collect()
    }

    /// Row holding `idx`, if occupied.
    pub fn find(&self, idx: [usize; 3]) -> Option<usize> {
        let lin = self.spec.linear(idx);
        self.indices.binary_search_by_key(&lin, |&i| self.spec.linear(i)).ok()
    }
}

fn check_channels(c: usize, need: usize) -> Result<()> {
    if c < need {
        return Err(Error::Config(format!("{need} feature channels needed, C = {c}")));
    }
    Ok(())
}

fn from_buckets<T: Real>(spec: &VoxelGridSpec<T>, modality: Modality, c: usize, buckets: BTreeMap<usize, Vec<T>>) -> SparseVoxelTensor<T> {
    let mut indices = Vec::with_capacity(buckets.len());
    let mut data = Vec::with_capacity(buckets.len() * c);
    for (lin, mut f) in buckets {
        indices.push(spec.unlinear(lin));
        f.resize(c, T::zero());
        data.extend(f);
    }
    let n = indices.len();
    SparseVoxelTensor { spec: *spec, modality, indices, features: Tensor::new(&[n, c], data).expect("bucket shape") }
}

/// Lidar featurization: per occupied voxel `[mean offset x,y,z (in voxel
/// units, within ±0.5), mean intensity, ln(1+count)]`, zero padded to `c`.
pub fn voxelize<T: Real>(pc: &PointCloud<T>, spec: &VoxelGridSpec<T>, c: usize) -> Result<SparseVoxelTensor<T>> {
    check_channels(c, LIDAR_FEATURES)?;
    // sums: offsets(3), intensity, count
    let mut acc: BTreeMap<usize, [T; 5]> = BTreeMap::new();
    for p in &pc.points {
        let Some(idx) = spec.index_of(p.position) else { continue };
        let center = spec.center(idx);
        let e = acc.entry(spec.linear(idx)).or_insert([T::zero(); 5]);
        for a in 0..3 {
            e[a] = e[a] + (p.position[a] - center[a]) / spec.voxel_size;
        }
        e[3] = e[3] + p.intensity;
        e[4] = e[4] + T::one();
    }
    let buckets = acc
        .into_iter()
        .map(|(lin, s)| {
            let n = s[4];
            (lin, vec![s[0] / n, s[1] / n, s[2] / n, s[3] / n, n.ln_1p()])
        })
        .collect();
    Ok(from_buckets(spec, Modality::Lidar, c, buckets))
}

/// Per-pixel camera depth (`+inf` where nothing was hit), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap<T> {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<T>,
}

impl<T: Real> DepthMap<T> {
    pub fn new(width: usize, height: usize, depth: Vec<T>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::Size(format!("{width}x{height} depth map with {} values", depth.len())));
        }
        Ok(Self { width, height, depth })
    }
}

/// Lifts every pixel with finite positive depth to a world point and averages
/// per voxel: `[mean R, G, B, ln(1+hits), mean world ray z]`, zero padded.
pub fn unproject_image_features<T: Real>(
    images: &[Image<T>],
    depths: &[DepthMap<T>],
    cams: &[Camera<T>],
    spec: &VoxelGridSpec<T>,
    c: usize,
) -> Result<SparseVoxelTensor<T>> {
    check_channels(c, IMAGE_FEATURES)?;
    if images.len() != depths.len() || images.len() != cams.len() {
        return Err(Error::Size(format!("{} images, {} depth maps, {} cameras", images.len(), depths.len(), cams.len())));
    }
    let h = T::of(0.5);
    let mut acc: BTreeMap<usize, [T; 5]> = BTreeMap::new();
    for ((img, dm), cam) in images.iter().zip(depths).zip(cams) {
        if img.width != cam.width || img.height != cam.height || dm.width != cam.width || dm.height != cam.height {
            return Err(Error::Size(format!(
                "view resolution mismatch: image {}x{}, depth {}x{}, camera {}x{}",
                img.width, img.height, dm.width, dm.height, cam.width, cam.height
            )));
        }
        for y in 0..img.height {
            for x in 0..img.width {
                let z = dm.depth[y * img.width + x];
                if !z.is_finite() || z <= T::zero() {
                    continue;
                }
                let (u, v) = (T::of_usize(x) + h, T::of_usize(y) + h);
                let Some(idx) = spec.index_of(cam.unproject(u, v, z)) else { continue };
                let rgb = img.pixel(x, y);
                let ray = cam.ray_direction(u, v);
                let e = acc.entry(spec.linear(idx)).or_insert([T::zero(); 5]);
                e[0] = e[0] + rgb[0];
                e[1] = e[1] + rgb[1];
                e[2] = e[2] + rgb[2];
                e[3] = e[3] + T::one();
                e[4] = e[4] + ray[2];
            }
        }
    }
    let buckets = acc
        .into_iter()
        .map(|(lin, s)| {
            let n = s[3];
            (lin, vec![s[0] / n, s[1] / n, s[2] / n, n.ln_1p(), s[4] / n])
        })
        .collect();
    Ok(from_buckets(spec, Modality::Image, c, buckets))
}

/// Non-zero voxels as queries located at their voxel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySet<T: Real> {
    pub centers: Vec<Vec3<T>>,
    pub features: Tensor<T>,
    pub indices: Vec<[usize; 3]>,
}

impl<T: Real> QuerySet<T> {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

pub fn nonzero_queries<T: Real>(t: &SparseVoxelTensor<T>) -> QuerySet<T> {
    QuerySet {
        centers: t.indices.iter().map(|&i| t.spec.center(i)).collect(),
        features: t.features.clone(),
        indices: t.indices.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse_voxel::points::LidarPoint;

    fn spec() -> VoxelGridSpec<f64> {
        VoxelGridSpec::new([0.0; 3], 1.0, [4, 4, 4]).unwrap()
    }

    fn cloud(pts: &[[f64; 3]]) -> PointCloud<f64> {
        PointCloud::new(pts.iter().map(|&p| LidarPoint { position: p, intensity: 0.25 }).collect()).unwrap()
    }

    #[test]
    fn single_point_at_center() {
        let t = voxelize(&cloud(&[[1.5, 2.5, 0.5]]), &spec(), 8).unwrap();
        assert_eq!(t.indices, vec![[1, 2, 0]]);
        let f = t.features.row(0);
        assert_eq!(&f[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(f[3], 0.25);
        assert!((f[4] - 2f64.ln()).abs() < 1e-15);
        assert!(f[5..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_pair_cancels() {
        let t = voxelize(&cloud(&[[1.3, 1.4, 1.1], [1.7, 1.6, 1.9]]), &spec(), 5).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.features.row(0)[..3].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn out_of_bounds_skipped_and_sorted() {
        let t = voxelize(&cloud(&[[3.5, 3.5, 3.5], [9.0, 0.0, 0.0], [0.5, 0.5, 0.5]]), &spec(), 5).unwrap();
        assert_eq!(t.indices, vec![[0, 0, 0], [3, 3, 3]]);
    }

    #[test]
    fn too_few_channels() {
        assert!(voxelize(&cloud(&[]), &spec(), 4).is_err());
    }

    #[test]
    fn queries_sit_at_centers() {
        let t = voxelize(&cloud(&[[0.2, 0.2, 0.2]]), &spec(), 5).unwrap();
        let q = nonzero_queries(&t);
        assert_eq!(q.centers, vec![[0.5, 0.5, 0.5]]);
        assert!(nonzero_queries(&SparseVoxelTensor::empty(spec(), Modality::Lidar, 5)).is_empty());
    }

    #[test]
    fn single_ray_lands_where_expected() {
        let cam = Camera::look_at([2.0, 2.0, -3.0], [2.0, 2.0, 2.0], [0.0, 1.0, 0.0], 1.0, 1, 1).unwrap();
        let img = Image::filled(1, 1, [0.2, 0.4, 0.6]);
        let dm = DepthMap::new(1, 1, vec![4.6]).unwrap();
        let t = unproject_image_features(&[img], &[dm], &[cam], &spec(), 6).unwrap();
        assert_eq!(t.indices, vec![[2, 2, 1]]);
        let f = t.features.row(0);
        assert_eq!(&f[..3], &[0.2, 0.4, 0.6]);
        assert!((f[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_depth_gives_empty() {
        let cam = Camera::look_at([2.0, 2.0, -3.0], [2.0, 2.0, 2.0], [0.0, 1.0, 0.0], 1.0, 2, 2).unwrap();
        let dm = DepthMap::new(2, 2, vec![f64::INFINITY; 4]).unwrap();
        let t = unproject_image_features(&[Image::filled(2, 2, [1.0; 3])], &[dm], &[cam], &spec(), 5).unwrap();
        assert!(t.is_empty());
    }
}
