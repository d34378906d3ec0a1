use crate::adaptive_fusion::FusedVoxelTensor;
use crate::diffcore::ops::{activation, gather_slots, linear, scale, shift, slice_cols};
use crate::diffcore::{glorot_uniform, Activation, Gradients, Parameter, RngStream, Tape, Tensor, Var, Vjp};
use crate::error::{Error, Result};
use crate::gaussian_field::anchors::Anchor;
use crate::gaussian_field::primitive::{GaussianField, GaussianPrimitive};
use crate::scalar::Real;

/// Width of the geometry head: Δmu(3), log-scale offset(3), rotation
/// vector(3), opacity logit(1).
pub const GEOMETRY_OUTPUTS: usize = 10;
pub const COLOR_OUTPUTS: usize = 3;
const TAPS: usize = 27;

/// One 3×3×3 convolution over fused voxels, then per-anchor heads.
#[derive(Clone, Debug)]
pub struct InitNetParams<T: Real> {
    /// `(27·4C) × hidden`, tap-major in (dz, dy, dx) order.
    pub conv_weight: Parameter<T>,
    pub conv_bias: Parameter<T>,
    pub geometry_weight: Parameter<T>,
    pub geometry_bias: Parameter<T>,
    pub color_weight: Parameter<T>,
    pub color_bias: Parameter<T>,
}

pub struct InitNetVars {
    pub conv: (Var, Var),
    pub geometry: (Var, Var),
    pub color: (Var, Var),
}

impl<T: Real> InitNetParams<T> {
    pub fn new(fused_channels: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let cin = TAPS * fused_channels;
        Self {
            conv_weight: Parameter::new("init.conv.weight", glorot_uniform(&[cin, hidden], cin, hidden, rng)),
            conv_bias: Parameter::new("init.conv.bias", Tensor::zeros(&[hidden])),
            geometry_weight: Parameter::new("init.geometry.weight", glorot_uniform(&[hidden, GEOMETRY_OUTPUTS], hidden, GEOMETRY_OUTPUTS, rng)),
            geometry_bias: Parameter::new("init.geometry.bias", Tensor::zeros(&[GEOMETRY_OUTPUTS])),
            color_weight: Parameter::new("init.color.weight", glorot_uniform(&[hidden, COLOR_OUTPUTS], hidden, COLOR_OUTPUTS, rng)),
            color_bias: Parameter::new("init.color.bias", Tensor::zeros(&[COLOR_OUTPUTS])),
        }
    }

    pub fn zeros(fused_channels: usize, hidden: usize) -> Self {
        let z = |name: &str, shape: &[usize]| Parameter::new(name, Tensor::zeros(shape));
        Self {
            conv_weight: z("init.conv.weight", &[TAPS * fused_channels, hidden]),
            conv_bias: z("init.conv.bias", &[hidden]),
            geometry_weight: z("init.geometry.weight", &[hidden, GEOMETRY_OUTPUTS]),
            geometry_bias: z("init.geometry.bias", &[GEOMETRY_OUTPUTS]),
            color_weight: z("init.color.weight", &[hidden, COLOR_OUTPUTS]),
            color_bias: z("init.color.bias", &[COLOR_OUTPUTS]),
        }
    }

    pub fn fused_channels(&self) -> usize {
        self.conv_weight.shape()[0] / TAPS
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> InitNetVars {
        InitNetVars {
            conv: (tape.param(&self.conv_weight), tape.param(&self.conv_bias)),
            geometry: (tape.param(&self.geometry_weight), tape.param(&self.geometry_bias)),
            color: (tape.param(&self.color_weight), tape.param(&self.color_bias)),
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![&self.conv_weight, &self.conv_bias, &self.geometry_weight, &self.geometry_bias, &self.color_weight, &self.color_bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![
            &mut self.conv_weight,
            &mut self.conv_bias,
            &mut self.geometry_weight,
            &mut self.geometry_bias,
            &mut self.color_weight,
            &mut self.color_bias,
        ]
    }

    pub fn accumulate(&mut self, grads: &Gradients<T>, v: &InitNetVars) {
        grads.accumulate_into(&mut self.conv_weight, v.conv.0);
        grads.accumulate_into(&mut self.conv_bias, v.conv.1);
        grads.accumulate_into(&mut self.geometry_weight, v.geometry.0);
        grads.accumulate_into(&mut self.geometry_bias, v.geometry.1);
        grads.accumulate_into(&mut self.color_weight, v.color.0);
        grads.accumulate_into(&mut self.color_bias, v.color.1);
    }
}

/// `(θ/2)`-half-angle quaternion of a rotation vector, row-wise `N×3 → N×4`.
struct ExpMapOp;

/// `sin(θ/2)/θ` and `(d/dθ of that)/θ`, with series near zero.
fn expmap_coeffs<T: Real>(theta: T) -> (T, T) {
    let h = T::of(0.5);
    if theta < T::of(1e-4) {
        let t2 = theta * theta;
        (h - t2 / T::of(48.0), T::of(-1.0 / 24.0) + t2 / T::of(960.0))
    } else {
        let (s, c) = (theta * h).sin_cos();
        (s / theta, (theta * c * h - s) / (theta * theta * theta))
    }
}

fn expmap_row<T: Real>(v: &[T]) -> [T; 4] {
    let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let (s, _) = expmap_coeffs(theta);
    [(theta * T::of(0.5)).cos(), s * v[0], s * v[1], s * v[2]]
}

impl<T: Real> Vjp<T> for ExpMapOp {
    fn name(&self) -> &'static str {
        "expmap"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0];
        let mut d = Tensor::zeros(x.shape());
        for r in 0..x.rows() {
            let v = x.row(r);
            let gr = g.row(r);
            let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let (s, ds) = expmap_coeffs(theta);
            // dw/dv = −½·s·v ; d(s·v)/dv = s·I + ds·v·vᵀ
            let vg: T = (0..3).map(|j| v[j] * gr[1 + j]).sum();
            let out = d.row_mut(r);
            for i in 0..3 {
                out[i] = -T::of(0.5) * s * v[i] * gr[0] + s * gr[1 + i] + ds * v[i] * vg;
            }
        }
        vec![Some(d)]
    }
}

pub fn expmap_op<T: Real>(tape: &mut Tape<T>, v: Var) -> Result<Var> {
    let x = tape.value(v);
    if x.shape().len() != 2 || x.cols() != 3 {
        return Err(Error::dim(format!("expmap expects N×3, got {:?}", x.shape())));
    }
    let mut data = Vec::with_capacity(x.rows() * 4);
    for r in 0..x.rows() {
        data.extend(expmap_row(x.row(r)));
    }
    let out = Tensor::new(&[x.rows(), 4], data)?;
    Ok(tape.push(&[v], out, ExpMapOp))
}

/// Differentiable initialization result. `params` are the five groups of
/// Θ⁽⁰⁾ in [`GaussianField::to_tensors`] layout.
pub struct InitOutput<T: Real> {
    pub params: [Var; 5],
    pub field: GaussianField<T>,
    /// Anchors dropped for lying outside the grid.
    pub skipped: usize,
}

/// Evaluates the init network at every in-grid anchor. `fused_feats` is the
/// tape handle of `fused.features`.
pub fn init_gaussians_op<T: Real>(
    tape: &mut Tape<T>,
    fused: &FusedVoxelTensor<T>,
    fused_feats: Var,
    anchors: &[Anchor<T>],
    net: &InitNetParams<T>,
    vars: &InitNetVars,
) -> Result<InitOutput<T>> {
    if anchors.is_empty() {
        return Err(Error::Init("no anchors".into()));
    }
    let c4 = fused.features.cols();
    if net.fused_channels() != c4 {
        return Err(Error::Config(format!("init net expects {} fused channels, got {c4}", net.fused_channels())));
    }
    let spec = &fused.spec;
    let mut row_of = vec![None; spec.num_voxels()];
    for (r, &idx) in fused.indices.iter().enumerate() {
        row_of[spec.linear(idx)] = Some(r);
    }
    let mut kept = Vec::with_capacity(anchors.len());
    let mut slots = Vec::with_capacity(anchors.len() * TAPS);
    for a in anchors {
        let Some(idx) = spec.index_of(a.position) else { continue };
        kept.push(*a);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let n = [idx[0] as i64 + dx, idx[1] as i64 + dy, idx[2] as i64 + dz];
                    let inside = (0..3).all(|ax| n[ax] >= 0 && n[ax] < spec.dims[ax] as i64);
                    slots.push(if inside { row_of[spec.linear([n[0] as usize, n[1] as usize, n[2] as usize])] } else { None });
                }
            }
        }
    }
    let skipped = anchors.len() - kept.len();
    if skipped > 0 {
        log::warn!("init_gaussians: {skipped} anchors outside the grid skipped");
    }
    if kept.is_empty() {
        return Err(Error::Init("every anchor lies outside the grid".into()));
    }
    let n = kept.len();
    let patches = gather_slots(tape, fused_feats, &slots, TAPS)?;
    let h = linear(tape, patches, vars.conv.0, vars.conv.1)?;
    let h = activation(tape, h, Activation::Relu);
    let geo = linear(tape, h, vars.geometry.0, vars.geometry.1)?;
    let color = linear(tape, h, vars.color.0, vars.color.1)?;

    let d_mu = slice_cols(tape, geo, 0, 3)?;
    let d_mu = activation(tape, d_mu, Activation::Tanh);
    let d_mu = scale(tape, d_mu, spec.voxel_size * T::of(0.5));
    let anchor_pos = Tensor::new(&[n, 3], kept.iter().flat_map(|a| a.position).collect())?;
    let mu = shift(tape, d_mu, &anchor_pos)?;

    let d_ls = slice_cols(tape, geo, 3, 6)?;
    let base = Tensor::full(&[n, 3], (spec.voxel_size * T::of(0.5)).ln());
    let log_scale = shift(tape, d_ls, &base)?;

    let rv = slice_cols(tape, geo, 6, 9)?;
    let rot = expmap_op(tape, rv)?;
    let opacity = slice_cols(tape, geo, 9, 10)?;
    let params = [mu, log_scale, rot, opacity, color];

    let mut field = GaussianField::default();
    let vals: Vec<&Tensor<T>> = params.iter().map(|&p| tape.value(p)).collect();
    for (i, a) in kept.iter().enumerate() {
        let raw: Vec<T> = vals.iter().flat_map(|t| t.row(i).iter().copied()).collect();
        field.push(GaussianPrimitive::from_raw(&raw), a.kind, Some(i));
    }
    Ok(InitOutput { params, field, skipped })
}

/// Tape-free initialization.
pub fn init_gaussians<T: Real>(fused: &FusedVoxelTensor<T>, anchors: &[Anchor<T>], net: &InitNetParams<T>) -> Result<GaussianField<T>> {
    let mut tape = Tape::new();
    let f = tape.constant(fused.features.clone());
    let vars = net.bind(&mut tape);
    Ok(init_gaussians_op(&mut tape, fused, f, anchors, net, &vars)?.field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_field::primitive::Provenance;
    use crate::sparse_voxel::VoxelGridSpec;

    fn fused() -> FusedVoxelTensor<f64> {
        let spec = VoxelGridSpec::new([0.0; 3], 0.5, [4, 4, 2]).unwrap();
        let idx = vec![[0, 0, 0], [1, 0, 0], [2, 3, 1]];
        FusedVoxelTensor { spec, indices: idx, features: Tensor::new(&[3, 4], (0..12).map(|i| i as f64 * 0.1 + 0.1).collect()).unwrap() }
    }

    #[test]
    fn zero_net_is_anchor_exact() {
        let f = fused();
        let anchors = vec![
            Anchor { position: [0.3, 0.1, 0.2], kind: Provenance::PointAnchor },
            Anchor { position: [1.25, 1.75, 0.75], kind: Provenance::VoxelAnchor },
        ];
        let field = init_gaussians(&f, &anchors, &InitNetParams::zeros(4, 16)).unwrap();
        assert_eq!(field.len(), 2);
        for (g, a) in field.primitives.iter().zip(&anchors) {
            assert_eq!(g.mu, a.position);
            for s in g.scale() {
                assert!((s - 0.25).abs() < 1e-15);
            }
            assert_eq!(g.rot, [1.0, 0.0, 0.0, 0.0]);
            assert_eq!(g.opacity(), 0.5);
            assert_eq!(g.rgb(), [0.5; 3]);
        }
        assert_eq!(field.provenance, vec![Provenance::PointAnchor, Provenance::VoxelAnchor]);
    }

    #[test]
    fn outside_anchor_skipped() {
        let f = fused();
        let anchors = vec![
            Anchor { position: [0.3, 0.1, 0.2], kind: Provenance::PointAnchor },
            Anchor { position: [9.0, 0.0, 0.0], kind: Provenance::PointAnchor },
        ];
        let mut tape = Tape::new();
        let fv = tape.constant(f.features.clone());
        let net = InitNetParams::zeros(4, 8);
        let vars = net.bind(&mut tape);
        let out = init_gaussians_op(&mut tape, &f, fv, &anchors, &net, &vars).unwrap();
        assert_eq!((out.field.len(), out.skipped), (1, 1));
    }

    #[test]
    fn expmap_is_unit_and_matches_fd() {
        for v in [[0.0, 0.0, 0.0], [0.3, -0.2, 0.9], [1e-6, 2e-6, -1e-6], [2.0, 1.0, -1.5]] {
            let q = expmap_row(&v);
            assert!((q.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
            let g = [0.7, -0.3, 0.2, 1.1];
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::new(&[1, 3], v.to_vec()).unwrap());
            let y = expmap_op(&mut tape, x).unwrap();
            let grads = tape.backward_with(y, Tensor::new(&[1, 4], g.to_vec()).unwrap()).unwrap();
            let an = grads.wrt(&tape, x);
            for i in 0..3 {
                let eps = 1e-6;
                let mut hi = v;
                hi[i] += eps;
                let mut lo = v;
                lo[i] -= eps;
                let f = |p: [f64; 3]| expmap_row(&p).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
                let fd = (f(hi) - f(lo)) / (2.0 * eps);
                assert!((fd - an.data()[i]).abs() < 1e-8, "{v:?}[{i}]: {fd} vs {}", an.data()[i]);
            }
        }
    }
}
