use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatocc::adaptive_fusion::FusedVoxelTensor;
use splatocc::diffcore::{check_tape_fn, MlpVars, Parameter, RngStream, Tensor};
use splatocc::losses::occupancy_loss_op;
use splatocc::occupancy::*;
use splatocc::sparse_voxel::VoxelGridSpec;

fn spec(dims: [usize; 3]) -> VoxelGridSpec<f64> {
    VoxelGridSpec::new([0.0; 3], 0.5, dims).unwrap()
}

fn random_fused(rng: &mut ChaCha8Rng, s: VoxelGridSpec<f64>, n: usize, c4: usize) -> FusedVoxelTensor<f64> {
    let mut lin = BTreeSet::new();
    while lin.len() < n {
        lin.insert(rng.random_range(0..s.num_voxels()));
    }
    let data = (0..n * c4).map(|_| rng.random_range(-1.0..1.0)).collect();
    FusedVoxelTensor { spec: s, indices: lin.into_iter().map(|l| s.unlinear(l)).collect(), features: Tensor::new(&[n, c4], data).unwrap() }
}

#[test]
fn head_and_occupancy_loss_gradients() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let s = spec([3, 3, 2]);
        let fused = random_fused(&mut rng, s, 7, 8);
        let labels: Vec<usize> = (0..s.num_voxels()).map(|_| rng.random_range(0..4)).collect();
        let head = HeadParams::<f64>::new(8, 6, 3, &mut RngStream::new(seed));
        let mut params: Vec<Parameter<f64>> = head.parameters().into_iter().cloned().collect();
        params.push(Parameter::new("fused", fused.features.clone()));
        let report = check_tape_fn(
            |tape, v| {
                let vars = HeadVars {
                    mlp: MlpVars { layers: vec![(v[0], v[1], head.mlp.layers[0].activation), (v[2], v[3], head.mlp.layers[1].activation)] },
                    empty_bias: v[4],
                };
                let logits = occupancy_head_op(tape, &fused, v[5], &head, &vars)?;
                Ok(occupancy_loss_op(tape, logits, &labels, None)?.total)
            },
            &params,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.pass(), "{report}");
    }
}

/// Confusion-matrix oracle: IoU_c = M[c][c] / (row_c + col_c − M[c][c]).
#[test]
fn metrics_match_confusion_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let s = spec([8, 8, 4]);
    let ncls = 4;
    for _ in 0..50 {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            (0..s.num_voxels()).map(|_| if rng.random::<f64>() < 0.5 { 0 } else { rng.random_range(1..ncls) }).collect()
        };
        let gt = OccupancyGrid::new(s, ncls, draw(&mut rng)).unwrap();
        let pred = OccupancyGrid::new(s, ncls, draw(&mut rng)).unwrap();
        let mut m = vec![vec![0usize; ncls + 1]; ncls + 1];
        for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
            m[g][p] += 1;
        }
        let got = iou_miou(&pred, &gt, ncls).unwrap();
        let mut present = Vec::new();
        for c in 1..=ncls {
            let row: usize = m[c].iter().sum();
            let col: usize = m.iter().map(|r| r[c]).sum();
            if row == 0 {
                assert_eq!(got.per_class[c - 1], None);
                continue;
            }
            let iou = m[c][c] as f64 / (row + col - m[c][c]) as f64;
            assert_eq!(got.per_class[c - 1], Some(iou));
            present.push(iou);
        }
        let miou = present.iter().sum::<f64>() / present.len() as f64;
        assert!((got.miou - miou).abs() < 1e-15);
        let occ_both: usize = (1..=ncls).map(|g| (1..=ncls).map(|p| m[g][p]).sum::<usize>()).sum();
        let total: usize = m.iter().flatten().sum();
        let geo = occ_both as f64 / (total - m[0][0]) as f64;
        assert!((got.iou - geo).abs() < 1e-15);

        // geometric IoU is symmetric in its arguments
        assert!((iou_miou(&gt, &pred, ncls).unwrap().iou - got.iou).abs() < 1e-15);
    }
}

#[test]
fn metrics_invariant_to_voxel_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let s = spec([4, 4, 2]);
    let gt: Vec<usize> = (0..s.num_voxels()).map(|_| rng.random_range(0..4)).collect();
    let pred: Vec<usize> = (0..s.num_voxels()).map(|_| rng.random_range(0..4)).collect();
    let mut perm: Vec<usize> = (0..s.num_voxels()).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let a = iou_miou(&OccupancyGrid::new(s, 3, pred.clone()).unwrap(), &OccupancyGrid::new(s, 3, gt.clone()).unwrap(), 3).unwrap();
    let b = iou_miou(
        &OccupancyGrid::new(s, 3, perm.iter().map(|&i| pred[i]).collect()).unwrap(),
        &OccupancyGrid::new(s, 3, perm.iter().map(|&i| gt[i]).collect()).unwrap(),
        3,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn grid_mismatch_is_an_error() {
    let a = OccupancyGrid::empty(spec([2, 2, 2]), 2);
    let b = OccupancyGrid::empty(spec([2, 2, 3]), 2);
    assert!(iou_miou(&a, &b, 2).is_err());
}

#[test]
fn dense_logits_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let s = spec([5, 4, 3]);
    let fused = random_fused(&mut rng, s, 9, 16);
    let head = HeadParams::<f64>::new(16, 8, 5, &mut RngStream::new(1));
    let logits = occupancy_head(&fused, &head).unwrap();
    assert_eq!(logits.shape(), &[60, 6]);
    let pred = predict(&logits, &s).unwrap();
    // bias row favors empty, so only fused voxels can be occupied
    let fused_lin: BTreeSet<usize> = fused.indices.iter().map(|&i| s.linear(i)).collect();
    assert!(pred.labels.iter().enumerate().all(|(l, &c)| c == 0 || fused_lin.contains(&l)));
}
