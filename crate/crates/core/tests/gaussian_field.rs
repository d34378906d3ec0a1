use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatocc::adaptive_fusion::FusedVoxelTensor;
use splatocc::diffcore::ops::sum;
use splatocc::diffcore::{check_tape_fn, Parameter, RngStream, Tensor};
use splatocc::gaussian_field::*;
use splatocc::losses::param_consistency_op;
use splatocc::sparse_voxel::{LidarPoint, PointCloud, VoxelGridSpec};

fn spec() -> VoxelGridSpec<f64> {
    VoxelGridSpec::new([-1.0, -1.0, 0.0], 0.5, [6, 6, 3]).unwrap()
}

fn random_fused(rng: &mut ChaCha8Rng, n: usize, c4: usize) -> FusedVoxelTensor<f64> {
    let s = spec();
    let mut lin = BTreeSet::new();
    while lin.len() < n {
        lin.insert(rng.random_range(0..s.num_voxels()));
    }
    let data = (0..n * c4).map(|_| rng.random_range(-1.0..1.0)).collect();
    FusedVoxelTensor { spec: s, indices: lin.into_iter().map(|l| s.unlinear(l)).collect(), features: Tensor::new(&[n, c4], data).unwrap() }
}

#[test]
fn anchors_match_set_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let s = spec();
        let mut fused = random_fused(&mut rng, 30, 4);
        // zero out a few rows so the threshold matters
        for r in 0..fused.len() {
            if rng.random::<f64>() < 0.3 {
                fused.features.row_mut(r).iter_mut().for_each(|v| *v *= 1e-5);
            }
        }
        let max = s.max_corner();
        let pts: Vec<LidarPoint<f64>> = (0..60)
            .map(|_| LidarPoint { position: std::array::from_fn(|a| rng.random_range(s.origin[a]..max[a])), intensity: 0.5 })
            .collect();
        let pc = PointCloud::new(pts.clone()).unwrap();
        let anchors = collect_anchors(&pc, &fused, 1e-3).unwrap();

        let point_cells: BTreeSet<usize> = pts.iter().map(|p| s.linear(s.index_of(p.position).unwrap())).collect();
        let voxel_cells: BTreeSet<usize> = (0..fused.len())
            .filter(|&r| fused.features.row(r).iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-3)
            .map(|r| s.linear(fused.indices[r]))
            .collect();
        let overlaps = point_cells.intersection(&voxel_cells).count();
        assert_eq!(anchors.len(), point_cells.len() + voxel_cells.len() - overlaps);
        let n_point = anchors.iter().filter(|a| a.kind == Provenance::PointAnchor).count();
        assert_eq!(n_point, point_cells.len());
    }
}

#[test]
fn init_mu_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let fused = random_fused(&mut rng, 12, 4);
    let anchors: Vec<Anchor<f64>> = fused
        .indices
        .iter()
        .take(6)
        .map(|&i| Anchor { position: fused.spec.center(i), kind: Provenance::VoxelAnchor })
        .collect();
    let mut srng = RngStream::new(32);
    let net = InitNetParams::<f64>::new(4, 5, &mut srng);
    let params: Vec<Parameter<f64>> = net.parameters().into_iter().cloned().collect();
    let report = check_tape_fn(
        |tape, v| {
            let f = tape.constant(fused.features.clone());
            let vars = InitNetVars { conv: (v[0], v[1]), geometry: (v[2], v[3]), color: (v[4], v[5]) };
            let out = init_gaussians_op(tape, &fused, f, &anchors, &net, &vars)?;
            Ok(sum(tape, out.params[0]))
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.pass(), "{report}");
}

#[test]
fn consistency_gradient_reaches_init_net_and_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let fused = random_fused(&mut rng, 10, 4);
    let anchors: Vec<Anchor<f64>> = fused
        .indices
        .iter()
        .take(5)
        .map(|&i| Anchor { position: fused.spec.center(i), kind: Provenance::VoxelAnchor })
        .collect();
    let mut srng = RngStream::new(33);
    let net = InitNetParams::<f64>::new(4, 6, &mut srng);
    // A converged snapshot that differs from Θ⁽⁰⁾ everywhere (keeps |·| away from its kink).
    let theta0 = init_gaussians(&fused, &anchors, &net).unwrap();
    let mut target = theta0.to_tensors();
    for t in &mut target {
        for v in t.data_mut() {
            *v += rng.random_range(0.2..0.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    let mut params: Vec<Parameter<f64>> = net.parameters().into_iter().cloned().collect();
    params.push(Parameter::new("fused", fused.features.clone()));
    let report = check_tape_fn(
        |tape, v| {
            let vars = InitNetVars { conv: (v[0], v[1]), geometry: (v[2], v[3]), color: (v[4], v[5]) };
            let out = init_gaussians_op(tape, &fused, v[6], &anchors, &net, &vars)?;
            param_consistency_op(tape, out.params, &target)
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.pass(), "{report}");
}

#[test]
fn init_counts_and_provenance() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let fused = random_fused(&mut rng, 8, 4);
    let anchors: Vec<Anchor<f64>> = fused
        .indices
        .iter()
        .enumerate()
        .map(|(i, &idx)| Anchor {
            position: fused.spec.center(idx),
            kind: if i % 2 == 0 { Provenance::PointAnchor } else { Provenance::VoxelAnchor },
        })
        .collect();
    let mut srng = RngStream::new(34);
    let field = init_gaussians(&fused, &anchors, &InitNetParams::new(4, 16, &mut srng)).unwrap();
    assert_eq!(field.len(), anchors.len());
    assert_eq!(field.provenance, anchors.iter().map(|a| a.kind).collect::<Vec<_>>());
    for (g, a) in field.primitives.iter().zip(&anchors) {
        // tanh keeps every mean within half a voxel of its anchor
        assert!((0..3).all(|ax| (g.mu[ax] - a.position[ax]).abs() <= 0.25));
        assert!((g.rot.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn densify_bounds_growth_and_stays_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..50 {
        let n = rng.random_range(1..30);
        let prims: Vec<GaussianPrimitive<f64>> = (0..n)
            .map(|_| GaussianPrimitive {
                mu: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
                log_scale: std::array::from_fn(|_| rng.random_range(-3.0..0.5)),
                rot: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                opacity_logit: rng.random_range(-8.0..4.0),
                color: [0.0; 3],
            })
            .collect();
        let field = GaussianField::new(prims, vec![Provenance::PointAnchor; n]);
        let grads: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let cfg = DensifyConfig { grad_threshold: 0.5, scale_threshold: 0.3, min_opacity: 0.005, voxel_size: 0.25 };
        let (out, stats) = densify(&field, &grads, &cfg);
        assert!(out.len() <= 2 * n);
        assert_eq!(out.len(), n + stats.cloned + stats.split - stats.pruned);
        assert!(out.primitives.iter().all(|g| g.is_finite()));
    }
}

#[test]
fn checkpoint_file_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let fused = random_fused(&mut rng, 8, 4);
    let anchors: Vec<Anchor<f64>> = fused.indices.iter().map(|&i| Anchor { position: fused.spec.center(i), kind: Provenance::VoxelAnchor }).collect();
    let mut srng = RngStream::new(36);
    let field = init_gaussians(&fused, &anchors, &InitNetParams::new(4, 16, &mut srng)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.txt");
    write_field(&field, &path).unwrap();
    let back: GaussianField<f64> = read_field(&path).unwrap();
    assert_eq!(back.primitives, field.primitives);
    assert_eq!(back.provenance, field.provenance);
}
