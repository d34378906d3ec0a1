use crate::adaptive_fusion::FusedVoxelTensor;
use crate::diffcore::{mlp_forward, Activation, Gradients, Mlp, MlpVars, Parameter, RngStream, Tape, Tensor, Var, Vjp};
use crate::error::{Error, Result};
use crate::occupancy::grid::OccupancyGrid;
use crate::scalar::Real;

/// Per-voxel MLP over fused channels plus the logits emitted where no fused
/// entry exists.
#[derive(Clone, Debug)]
pub struct HeadParams<T: Real> {
    pub mlp: Mlp<T>,
    pub empty_bias: Parameter<T>,
}

pub struct HeadVars {
    pub mlp: MlpVars,
    pub empty_bias: Var,
}

impl<T: Real> HeadParams<T> {
    /// `4C → hidden → Ncls+1`. The empty-bias row starts out favoring class 0.
    pub fn new(fused_channels: usize, hidden: usize, num_classes: usize, rng: &mut RngStream) -> Self {
        let mut bias = Tensor::zeros(&[num_classes + 1]);
        bias.data_mut()[0] = T::of(2.0);
        Self {
            mlp: Mlp::new("head", &[fused_channels, hidden, num_classes + 1], Activation::Relu, rng),
            empty_bias: Parameter::new("head.empty_bias", bias),
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> HeadVars {
        HeadVars { mlp: self.mlp.bind(tape), empty_bias: tape.param(&self.empty_bias) }
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v = self.mlp.parameters();
        v.push(&self.empty_bias);
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.mlp.parameters_mut();
        v.push(&mut self.empty_bias);
        v
    }

    pub fn accumulate(&mut self, grads: &Gradients<T>, vars: &HeadVars) {
        self.mlp.accumulate(grads, &vars.mlp);
        grads.accumulate_into(&mut self.empty_bias, vars.empty_bias);
    }
}

/// Scatters occupied-voxel logits into the dense grid, filling the rest with
/// the bias row.
struct DenseLogitsOp {
    rows: Vec<usize>,
    total: usize,
}

impl<T: Real> Vjp<T> for DenseLogitsOp {
    fn name(&self) -> &'static str {
        "dense_logits"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let k = inputs[1].len();
        let mut d_occ = Vec::with_capacity(self.rows.len() * k);
        let mut occupied = vec![false; self.total];
        for &r in &self.rows {
            d_occ.extend_from_slice(g.row(r));
            occupied[r] = true;
        }
        let mut d_bias = vec![T::zero(); k];
        for (r, &occ) in occupied.iter().enumerate() {
            if !occ {
                for (d, &v) in d_bias.iter_mut().zip(g.row(r)) {
                    *d = *d + v;
                }
            }
        }
        vec![Some(Tensor::new(inputs[0].shape(), d_occ).expect("shape")), Some(Tensor::vector(d_bias))]
    }
}

/// Dense `V × (Ncls+1)` logits for every voxel of `fused.spec`, in linear
/// order. `fused_feats` is the tape handle of `fused.features`.
pub fn occupancy_head_op<T: Real>(tape: &mut Tape<T>, fused: &FusedVoxelTensor<T>, fused_feats: Var, head: &HeadParams<T>, vars: &HeadVars) -> Result<Var> {
    let c = tape.value(fused_feats).cols();
    if c != head.mlp.in_dim() {
        return Err(Error::Config(format!("head expects {} fused channels, got {c}", head.mlp.in_dim())));
    }
    let occ = mlp_forward(tape, fused_feats, &vars.mlp.layers)?;
    let total = fused.spec.num_voxels();
    let k = head.num_outputs();
    let rows: Vec<usize> = fused.indices.iter().map(|&i| fused.spec.linear(i)).collect();
    let bias = tape.value(vars.empty_bias).data().to_vec();
    let mut out = Vec::with_capacity(total * k);
    for _ in 0..total {
        out.extend_from_slice(&bias);
    }
    let ov = tape.value(occ);
    for (i, &r) in rows.iter().enumerate() {
        out[r * k..(r + 1) * k].copy_from_slice(ov.row(i));
    }
    let value = Tensor::new(&[total, k], out)?;
    Ok(tape.push(&[occ, vars.empty_bias], value, DenseLogitsOp { rows, total }))
}

pub fn occupancy_head<T: Real>(fused: &FusedVoxelTensor<T>, head: &HeadParams<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let f = tape.constant(fused.features.clone());
    let vars = head.bind(&mut tape);
    let v = occupancy_head_op(&mut tape, fused, f, head, &vars)?;
    Ok(tape.value(v).clone())
}

/// Arg-max labels (ties go to the lower class id).
pub fn predict<T: Real>(logits: &Tensor<T>, fused_spec: &crate::sparse_voxel::VoxelGridSpec<T>) -> Result<OccupancyGrid<T>> {
    let k = logits.cols();
    let labels = (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            (1..k).fold(0, |best, c| if row[c] > row[best] { c } else { best })
        })
        .collect();
    OccupancyGrid::new(*fused_spec, k - 1, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse_voxel::VoxelGridSpec;

    fn spec() -> VoxelGridSpec<f64> {
        VoxelGridSpec::new([0.0; 3], 1.0, [3, 2, 2]).unwrap()
    }

    #[test]
    fn empty_fused_is_all_bias() {
        let mut rng = RngStream::new(1);
        let head = HeadParams::<f64>::new(8, 6, 3, &mut rng);
        let fused = FusedVoxelTensor { spec: spec(), indices: vec![], features: Tensor::zeros(&[0, 8]) };
        let logits = occupancy_head(&fused, &head).unwrap();
        assert_eq!(logits.shape(), &[12, 4]);
        assert!((0..12).all(|r| logits.row(r) == head.empty_bias.value.data()));
        assert_eq!(predict(&logits, &spec()).unwrap().occupied(), 0);
    }

    #[test]
    fn occupied_rows_use_mlp() {
        let mut rng = RngStream::new(2);
        let head = HeadParams::<f64>::new(2, 4, 2, &mut rng);
        let feats = Tensor::from_rows(&[vec![0.3, -0.7]]);
        let fused = FusedVoxelTensor { spec: spec(), indices: vec![[2, 1, 0]], features: feats.clone() };
        let logits = occupancy_head(&fused, &head).unwrap();
        let want = head.mlp.eval(&feats).unwrap();
        assert_eq!(logits.row(spec().linear([2, 1, 0])), want.row(0));
    }

    #[test]
    fn width_mismatch() {
        let mut rng = RngStream::new(3);
        let head = HeadParams::<f64>::new(4, 4, 2, &mut rng);
        let fused = FusedVoxelTensor { spec: spec(), indices: vec![], features: Tensor::zeros(&[0, 8]) };
        assert!(matches!(occupancy_head(&fused, &head), Err(Error::Config(_))));
    }
}
