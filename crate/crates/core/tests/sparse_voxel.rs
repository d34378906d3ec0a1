use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatocc::diffcore::Tensor;
use splatocc::renderer::{Camera, Image};
use splatocc::sparse_voxel::*;

fn random_tensor(rng: &mut ChaCha8Rng, spec: VoxelGridSpec<f64>, n: usize) -> SparseVoxelTensor<f64> {
    let mut lin = BTreeSet::new();
    while lin.len() < n {
        lin.insert(rng.random_range(0..spec.num_voxels()));
    }
    let idx: Vec<_> = lin.into_iter().map(|l| spec.unlinear(l)).collect();
    SparseVoxelTensor::new(spec, Modality::Lidar, idx, Tensor::full(&[n, 3], 1.0)).unwrap()
}

#[test]
fn knn_matches_exhaustive_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let spec = VoxelGridSpec::new([-2.0, 1.0, 0.0], 0.5, [12, 10, 6]).unwrap();
    let max = spec.max_corner();
    for _ in 0..5 {
        let t = random_tensor(&mut rng, spec, 200);
        let index = KnnIndex::new(&t);
        for q in 0..1000 {
            // Mix voxel-center queries (many ties) with continuous ones, some outside.
            let center = if q % 2 == 0 {
                spec.center(spec.unlinear(rng.random_range(0..spec.num_voxels())))
            } else {
                std::array::from_fn(|a| rng.random_range(spec.origin[a] - 1.0..max[a] + 1.0))
            };
            let got = index.query(center, 4);
            let want = knn_brute_force(center, &t, 4);
            assert_eq!(got, want, "query {center:?}");
        }
    }
}

#[test]
fn knn_excluded_voxels_are_no_closer() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let spec = VoxelGridSpec::new([0.0; 3], 1.0, [8, 8, 4]).unwrap();
    let t = random_tensor(&mut rng, spec, 40);
    for _ in 0..200 {
        let c: [f64; 3] = std::array::from_fn(|a| rng.random_range(0.0..spec.dims[a] as f64));
        let got = knn_nonzero(c, &t, 4).unwrap();
        assert!(got.windows(2).all(|w| w[0].distance <= w[1].distance));
        let worst = got.last().unwrap().distance;
        let all = knn_brute_force(c, &t, t.len());
        for n in all.iter().filter(|n| !got.iter().any(|g| g.row == n.row)) {
            assert!(n.distance >= worst);
        }
    }
}

#[test]
fn voxelize_matches_bucketing() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let spec = VoxelGridSpec::new([-1.0, -1.0, 0.0], 0.4, [5, 5, 3]).unwrap();
    let pts: Vec<LidarPoint<f64>> = (0..100)
        .map(|_| LidarPoint { position: [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-0.3..1.5)], intensity: rng.random() })
        .collect();
    let pc = PointCloud::new(pts.clone()).unwrap();
    let t = voxelize(&pc, &spec, 8).unwrap();
    let mut want = BTreeSet::new();
    for p in &pts {
        let f: Vec<f64> = (0..3).map(|a| (p.position[a] - spec.origin[a]) / spec.voxel_size).collect();
        if (0..3).all(|a| f[a] >= 0.0 && f[a] <= spec.dims[a] as f64) {
            let idx: [usize; 3] = std::array::from_fn(|a| (f[a].floor() as usize).min(spec.dims[a] - 1));
            want.insert(spec.linear(idx));
        }
    }
    assert_eq!(t.linear_indices(), want.into_iter().collect::<Vec<_>>());
    for idx in &t.indices {
        assert_eq!(spec.index_of(spec.center(*idx)), Some(*idx));
    }
}

#[test]
fn range_filter_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let pts: Vec<LidarPoint<f64>> = (0..300)
        .map(|_| LidarPoint { position: std::array::from_fn(|_| rng.random_range(-1.0..1.0)), intensity: 0.5 })
        .collect();
    let pc = PointCloud::new(pts.clone()).unwrap();
    let bounds = Aabb { min: [-0.8; 3], max: [0.8; 3] };
    let radius = 0.15;
    let got = range_filter(&pc, &bounds, 2, radius).unwrap();
    let inside: Vec<_> = pts.iter().filter(|p| bounds.contains(p.position)).collect();
    let want: Vec<LidarPoint<f64>> = inside
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            inside
                .iter()
                .enumerate()
                .filter(|(j, q)| j != i && (0..3).map(|a| (q.position[a] - p.position[a]).powi(2)).sum::<f64>() <= radius * radius)
                .count()
                >= 2
        })
        .map(|(_, p)| **p)
        .collect();
    assert_eq!(got.points, want);
}

#[test]
fn two_views_average_colors() {
    let spec = VoxelGridSpec::new([0.0; 3], 1.0, [4, 4, 4]).unwrap();
    let target = [2.5, 2.5, 2.5];
    let a = Camera::look_at([2.5, 2.5, -2.0], target, [0.0, 1.0, 0.0], 0.5, 1, 1).unwrap();
    let b = Camera::look_at([-2.0, 2.5, 2.5], target, [0.0, 1.0, 0.0], 0.5, 1, 1).unwrap();
    let ia = Image::filled(1, 1, [0.2, 0.4, 0.6]);
    let ib = Image::filled(1, 1, [0.6, 0.0, 0.2]);
    let da = DepthMap::new(1, 1, vec![4.5]).unwrap();
    let db = DepthMap::new(1, 1, vec![4.5]).unwrap();
    let t = unproject_image_features(&[ia, ib], &[da, db], &[a, b], &spec, 5).unwrap();
    assert_eq!(t.indices, vec![[2, 2, 2]]);
    let f = t.features.row(0);
    for (got, want) in f[..3].iter().zip([0.4f64, 0.2, 0.4]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!((f[3] - 3f64.ln()).abs() < 1e-12);
}

/// Isolated splats rendered by the engine's own rasterizer: the lifted depth
/// samples must land in the voxel column under each splat's mean.
#[test]
fn rendered_depth_lifts_into_generating_columns() {
    use splatocc::gaussian_field::{GaussianField, GaussianPrimitive, Provenance};
    use splatocc::renderer::rasterize;

    let spec = VoxelGridSpec::new([-2.0, -2.0, 0.0], 0.5, [8, 8, 4]).unwrap();
    let cols = [[1, 1], [1, 5], [4, 3], [6, 6], [6, 1]];
    let prims: Vec<GaussianPrimitive<f64>> = cols
        .iter()
        .enumerate()
        .map(|(i, &[x, y])| GaussianPrimitive {
            mu: spec.center([x, y, i % 3]),
            log_scale: [0.06f64.ln(); 3],
            rot: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: 5.0,
            color: [0.0, 1.0, -1.0],
        })
        .collect();
    let field = GaussianField::new(prims, vec![Provenance::VoxelAnchor; cols.len()]);
    let mut lifted = 0.0;
    let mut inside = 0.0;
    for eye in [[0.0, -5.0, 4.0], [5.0, 1.0, 3.0], [-4.0, 4.0, 5.0]] {
        let cam = Camera::look_at(eye, [0.0, 0.0, 0.5], [0.0, 0.0, 1.0], 1.0, 64, 64).unwrap();
        let (img, aux) = rasterize(&field, &cam, [0.0; 3]);
        let depth = DepthMap::new(64, 64, aux.depth).unwrap();
        let t = unproject_image_features(&[img], &[depth], &[cam], &spec, 5).unwrap();
        for (r, idx) in t.indices.iter().enumerate() {
            let n = t.features.at(r, 3).exp_m1().round();
            lifted += n;
            if cols.contains(&[idx[0], idx[1]]) {
                inside += n;
            }
        }
    }
    assert!(lifted > 0.0);
    assert!(inside / lifted >= 0.95, "{inside} of {lifted}");
}

proptest::proptest! {
    #[test]
    fn center_maps_back_to_its_index(
        ox in -5.0f64..5.0, oy in -5.0f64..5.0, oz in -5.0f64..5.0,
        size in 0.05f64..2.0,
        dims in (1usize..20, 1usize..20, 1usize..10),
        pick in 0usize..4000,
    ) {
        let spec = VoxelGridSpec::new([ox, oy, oz], size, [dims.0, dims.1, dims.2]).unwrap();
        let idx = spec.unlinear(pick % spec.num_voxels());
        proptest::prop_assert_eq!(spec.index_of(spec.center(idx)), Some(idx));
    }
}
