//! Finite-difference checks of every differentiable operation on random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive_fusion::attention::{attention_op, gather_keys, slot_gate};
use crate::adaptive_fusion::{gumbel_softmax_op, Direction, FusedVoxelTensor, FusionParams};
use crate::diffcore::ops::{mul, softmax, sum};
use crate::diffcore::{check_tape_fn, mlp_forward, Activation, GradCheckReport, Mlp, MlpVars, Parameter, RngStream, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gaussian_field::{init_gaussians, init_gaussians_op, Anchor, GaussianField, GaussianPrimitive, InitNetParams, InitNetVars, Provenance};
use crate::losses::{cross_entropy_op, lovasz_softmax_op, param_consistency_op, photometric_op, SsimParams};
use crate::occupancy::{occupancy_head_op, HeadParams, HeadVars};
use crate::renderer::{rasterize_op, Camera, Image};
use crate::sparse_voxel::VoxelGridSpec;

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// Outcome of one operation over all seeds.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub module: &'static str,
    pub name: &'static str,
    pub seeds: u64,
    pub max_rel_err: f64,
    pub pass: bool,
}

type Case = fn(&mut ChaCha8Rng, u64) -> Result<GradCheckReport>;

const CASES: &[(&str, &str, Case)] = &[
    ("diffcore", "mlp", mlp_case),
    ("diffcore", "softmax", softmax_case),
    ("adaptive_fusion", "gumbel_softmax_frozen_noise", gumbel_case),
    ("adaptive_fusion", "attention_fusion", attention_case),
    ("gaussian_field", "init_network", init_case),
    ("renderer", "rasterizer_all_groups", raster_case),
    ("losses", "cross_entropy", ce_case),
    ("losses", "lovasz_softmax", lovasz_case),
    ("losses", "d_ssim", dssim_case),
    ("losses", "photometric", photometric_case),
    ("losses", "param_consistency", consistency_case),
    ("occupancy", "occupancy_head", head_case),
];

pub fn modules() -> Vec<&'static str> {
    let mut m: Vec<&str> = CASES.iter().map(|c| c.0).collect();
    m.dedup();
    m
}

/// Runs every case (or those of `module`) for `seeds` seeds.
pub fn run_suite(module: Option<&str>, seeds: u64) -> Result<Vec<OpCheck>> {
    if let Some(m) = module {
        if !CASES.iter().any(|c| c.0 == m) {
            return Err(Error::Config(format!("unknown module `{m}`; expected one of {:?}", modules())));
        }
    }
    let mut out = Vec::new();
    for &(m, name, case) in CASES.iter().filter(|c| module.is_none_or(|m| c.0 == m)) {
        let mut worst = 0.0f64;
        let mut pass = true;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(name.len() as u64));
            let r = case(&mut rng, seed)?;
            worst = worst.max(r.max_rel_err());
            pass &= r.pass();
        }
        out.push(OpCheck { module: m, name, seeds, max_rel_err: worst, pass });
    }
    Ok(out)
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], spread: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-spread..spread)).collect()).expect("shape")
}

/// `Σ w ⊙ x` with fixed random `w`, so every output entry gets its own weight.
fn probe(tape: &mut Tape<f64>, x: Var, rng_w: &Tensor<f64>) -> Result<Var> {
    let w = tape.constant(rng_w.clone());
    let p = mul(tape, x, w)?;
    Ok(sum(tape, p))
}

fn check(build: impl FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>, params: &[Parameter<f64>]) -> Result<GradCheckReport> {
    check_tape_fn(build, params, EPS, TOL)
}

fn mlp_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let mlp = Mlp::<f64>::new("m", &[5, 7, 3], Activation::Tanh, &mut RngStream::new(seed));
    let x = randn(rng, &[4, 5], 1.0);
    let w = randn(rng, &[4, 3], 1.0);
    let mut params: Vec<Parameter<f64>> = mlp.parameters().into_iter().cloned().collect();
    params.push(Parameter::new("x", x));
    check(
        |t, v| {
            let layers = vec![(v[0], v[1], Activation::Tanh), (v[2], v[3], Activation::Identity)];
            let y = mlp_forward(t, v[4], &layers)?;
            probe(t, y, &w)
        },
        &params,
    )
}

fn softmax_case(rng: &mut ChaCha8Rng, _: u64) -> Result<GradCheckReport> {
    let z = randn(rng, &[5, 4], 2.0);
    let w = randn(rng, &[5, 4], 1.0);
    check(
        |t, v| {
            let y = softmax(t, v[0]);
            probe(t, y, &w)
        },
        &[Parameter::new("z", z)],
    )
}

fn gumbel_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let logits = randn(rng, &[6, 4], 1.5);
    let noise = {
        let mut r = RngStream::new(seed);
        Tensor::new(&[6, 4], (0..24).map(|_| r.gumbel()).collect())?
    };
    let tau = rng.random_range(0.5..2.0);
    let w = randn(rng, &[6, 4], 1.0);
    check(
        |t, v| {
            let z = gumbel_softmax_op(t, v[0], &noise, tau)?;
            probe(t, z, &w)
        },
        &[Parameter::new("logits", logits)],
    )
}

fn attention_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let c = 3;
    let k_max = 4;
    let fp = FusionParams::<f64>::new(Direction::ImageToLidar, c, k_max, &mut RngStream::new(seed));
    let target = randn(rng, &[6, c], 1.0);
    let n = 5;
    let neighbors: Vec<Vec<usize>> = (0..n).map(|_| (0..k_max).map(|_| rng.random_range(0..6)).collect()).collect();
    let ks = Tensor::vector((0..n).map(|_| rng.random_range(1..=k_max) as f64).collect());
    let w = randn(rng, &[n, c], 1.0);
    let mut bias = fp.bias.clone();
    bias.value = randn(rng, &[c], 0.5);
    let params = vec![Parameter::new("target", target), fp.weight.clone(), bias];
    check(
        |t, v| {
            let keys = gather_keys(t, v[0], neighbors.clone(), k_max)?;
            let k = t.constant(ks.clone());
            let gated = slot_gate(t, keys, k, c)?;
            let omega = attention_op(t, gated, (v[1], v[2]))?;
            probe(t, omega, &w)
        },
        &params,
    )
}

fn small_fused(rng: &mut ChaCha8Rng, n: usize, c4: usize) -> FusedVoxelTensor<f64> {
    let s = VoxelGridSpec::new([-1.0, -1.0, 0.0], 0.5, [4, 4, 3]).expect("grid");
    let mut lin: Vec<usize> = Vec::new();
    while lin.len() < n {
        let l = rng.random_range(0..s.num_voxels());
        if !lin.contains(&l) {
            lin.push(l);
        }
    }
    lin.sort_unstable();
    FusedVoxelTensor { spec: s, indices: lin.into_iter().map(|l| s.unlinear(l)).collect(), features: randn(rng, &[n, c4], 1.0) }
}

fn init_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let fused = small_fused(rng, 10, 4);
    let anchors: Vec<Anchor<f64>> =
        fused.indices.iter().take(5).map(|&i| Anchor { position: fused.spec.center(i), kind: Provenance::VoxelAnchor }).collect();
    let net = InitNetParams::<f64>::new(4, 5, &mut RngStream::new(seed));
    let ws: Vec<Tensor<f64>> = [3, 3, 4, 1, 3].iter().map(|&c| randn(rng, &[5, c], 1.0)).collect();
    let mut params: Vec<Parameter<f64>> = net.parameters().into_iter().cloned().collect();
    params.push(Parameter::new("fused", fused.features.clone()));
    check(
        |t, v| {
            let vars = InitNetVars { conv: (v[0], v[1]), geometry: (v[2], v[3]), color: (v[4], v[5]) };
            let out = init_gaussians_op(t, &fused, v[6], &anchors, &net, &vars)?;
            let mut terms = Vec::with_capacity(5);
            for (p, w) in out.params.iter().zip(&ws) {
                terms.push(probe(t, *p, w)?);
            }
            crate::diffcore::ops::weighted_sum(t, &terms.into_iter().map(|x| (1.0, x)).collect::<Vec<_>>())
        },
        &params,
    )
}

fn raster_case(rng: &mut ChaCha8Rng, _: u64) -> Result<GradCheckReport> {
    let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let cam = Camera::new(24.0, 24.0, 8.0, 8.0, id, [0.0; 3], 16, 16)?;
    let prims: Vec<GaussianPrimitive<f64>> = (0..4)
        .map(|_| GaussianPrimitive {
            mu: [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(2.5..4.0)],
            log_scale: std::array::from_fn(|_| rng.random_range(0.08f64..0.2).ln()),
            rot: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            opacity_logit: rng.random_range(-0.5..1.5),
            color: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        })
        .collect();
    let field = GaussianField::new(prims, vec![Provenance::PointAnchor; 4]);
    let w = randn(rng, &[16, 16, 3], 1.0);
    let bg = [0.1, 0.2, 0.3];
    check(
        |t, v| {
            let (img, _) = rasterize_op(t, [v[0], v[1], v[2], v[3], v[4]], &cam, bg)?;
            probe(t, img, &w)
        },
        &field.to_parameters(),
    )
}

fn labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn ce_case(rng: &mut ChaCha8Rng, _: u64) -> Result<GradCheckReport> {
    let z = randn(rng, &[8, 4], 2.0);
    let y = labels(rng, 8, 4);
    check(|t, v| cross_entropy_op(t, v[0], &y, None), &[Parameter::new("logits", z)])
}

fn lovasz_case(rng: &mut ChaCha8Rng, _: u64) -> Result<GradCheckReport> {
    let z = randn(rng, &[8, 4], 2.0);
    let y = labels(rng, 8, 4);
    check(
        |t, v| {
            let p = softmax(t, v[0]);
            lovasz_softmax_op(t, p, &y, None)
        },
        &[Parameter::new("logits", z)],
    )
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image<f64> {
    Image::new(w, h, (0..w * h * 3).map(|_| rng.random_range(0.0..1.0)).collect()).expect("size")
}

fn dssim_case(rng: &mut ChaCha8Rng, _: u64) -> Result<GradCheckReport> {
    let target = random_image(rng, 12, 12);
    let x = random_image(rng, 12, 12);
    let p = SsimParams::default();
    // λ = 1 keeps only the D-SSIM term
    check(|t, v| Ok(photometric_op(t, v[0], &target, 1.0, &p)?.0), &[Parameter::new("image", Tensor::new(&[12, 12, 3], x.pixels)?)])
}

fn photometric_case(rng: &mut ChaCha8Rng, _: u64) -> Result<GradCheckReport> {
    let target = random_image(rng, 12, 11);
    let x = random_image(rng, 12, 11);
    let p = SsimParams::default();
    check(|t, v| Ok(photometric_op(t, v[0], &target, 0.2, &p)?.0), &[Parameter::new("image", Tensor::new(&[11, 12, 3], x.pixels)?)])
}

fn consistency_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let fused = small_fused(rng, 8, 4);
    // an odd anchor count keeps bias gradients (sums of ±1) away from exact zero,
    // where the relative error is pure round-off
    let anchors: Vec<Anchor<f64>> =
        fused.indices.iter().take(5).map(|&i| Anchor { position: fused.spec.center(i), kind: Provenance::VoxelAnchor }).collect();
    let net = InitNetParams::<f64>::new(4, 6, &mut RngStream::new(seed));
    let theta0 = init_gaussians(&fused, &anchors, &net)?;
    let mut target = theta0.to_tensors();
    // keep every |Θ_final − Θ⁽⁰⁾| away from the kink
    for t in &mut target {
        for v in t.data_mut() {
            *v += rng.random_range(0.2..0.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    let mut params: Vec<Parameter<f64>> = net.parameters().into_iter().cloned().collect();
    params.push(Parameter::new("fused", fused.features.clone()));
    check(
        |t, v| {
            let vars = InitNetVars { conv: (v[0], v[1]), geometry: (v[2], v[3]), color: (v[4], v[5]) };
            let out = init_gaussians_op(t, &fused, v[6], &anchors, &net, &vars)?;
            param_consistency_op(t, out.params, &target)
        },
        &params,
    )
}

fn head_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let fused = small_fused(rng, 6, 8);
    let head = HeadParams::<f64>::new(8, 5, 3, &mut RngStream::new(seed));
    let w = randn(rng, &[fused.spec.num_voxels(), 4], 1.0);
    let mut params: Vec<Parameter<f64>> = head.parameters().into_iter().cloned().collect();
    params.push(Parameter::new("fused", fused.features.clone()));
    check(
        |t, v| {
            let vars = HeadVars { mlp: MlpVars { layers: vec![(v[0], v[1], Activation::Relu), (v[2], v[3], Activation::Identity)] }, empty_bias: v[4] };
            let logits = occupancy_head_op(t, &fused, v[5], &head, &vars)?;
            probe(t, logits, &w)
        },
        &params,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_module_rejected() {
        assert!(run_suite(Some("nope"), 1).is_err());
    }

    #[test]
    fn single_seed_suite_passes() {
        for r in run_suite(None, 1).unwrap() {
            assert!(r.pass, "{} max rel err {}", r.name, r.max_rel_err);
        }
    }
}
