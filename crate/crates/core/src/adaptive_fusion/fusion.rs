use crate::adaptive_fusion::attention::{Direction, FusionParams};
use crate::adaptive_fusion::enhance::enhance_direction_op;
use crate::adaptive_fusion::selector::{gumbel_noise, KDecision, KMode, KSelectorParams};
use crate::diffcore::ops::{concat_cols, scatter_rows};
use crate::diffcore::{Gradients, MlpVars, Parameter, RngStream, Tape, Var};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse_voxel::{SparseVoxelTensor, VoxelGridSpec};

/// Every learnable piece of the fusion stage.
#[derive(Clone, Debug)]
pub struct FusionModule<T: Real> {
    pub selector: KSelectorParams<T>,
    pub image_to_lidar: FusionParams<T>,
    pub lidar_to_image: FusionParams<T>,
}

pub struct FusionVars {
    pub selector: MlpVars,
    pub image_to_lidar: (Var, Var),
    pub lidar_to_image: (Var, Var),
}

impl<T: Real> FusionModule<T> {
    pub fn new(c: usize, candidates: Vec<usize>, tau: T, rng: &mut RngStream) -> Result<Self> {
        let selector = KSelectorParams::new(c, candidates, tau, rng)?;
        let k_max = selector.k_max();
        Ok(Self {
            image_to_lidar: FusionParams::new(Direction::ImageToLidar, c, k_max, rng),
            lidar_to_image: FusionParams::new(Direction::LidarToImage, c, k_max, rng),
            selector,
        })
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> FusionVars {
        FusionVars {
            selector: self.selector.mlp.bind(tape),
            image_to_lidar: self.image_to_lidar.bind(tape),
            lidar_to_image: self.lidar_to_image.bind(tape),
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v = self.selector.mlp.parameters();
        v.extend(self.image_to_lidar.parameters());
        v.extend(self.lidar_to_image.parameters());
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.selector.mlp.parameters_mut();
        v.extend(self.image_to_lidar.parameters_mut());
        v.extend(self.lidar_to_image.parameters_mut());
        v
    }

    pub fn accumulate(&mut self, grads: &Gradients<T>, vars: &FusionVars) {
        self.selector.mlp.accumulate(grads, &vars.selector);
        grads.accumulate_into(&mut self.image_to_lidar.weight, vars.image_to_lidar.0);
        grads.accumulate_into(&mut self.image_to_lidar.bias, vars.image_to_lidar.1);
        grads.accumulate_into(&mut self.lidar_to_image.weight, vars.lidar_to_image.0);
        grads.accumulate_into(&mut self.lidar_to_image.bias, vars.lidar_to_image.1);
    }
}

/// Union of both modalities' occupied voxels with rows laid out as
/// `[F_I | F_L | F_I·ω_I | F_L·ω_L]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedVoxelTensor<T: Real> {
    pub spec: VoxelGridSpec<T>,
    pub indices: Vec<[usize; 3]>,
    pub features: Tensor<T>,
}

impl<T: Real> FusedVoxelTensor<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub struct FusedOutput<T> {
    /// `N × 4C` over `indices`.
    pub features: Var,
    pub indices: Vec<[usize; 3]>,
    pub image_decisions: Vec<KDecision<T>>,
    pub lidar_decisions: Vec<KDecision<T>>,
    pub image_k: Var,
    pub lidar_k: Var,
}

/// Sorted union of two sorted index lists and each list's positions in it.
fn union_rows<T: Real>(spec: &VoxelGridSpec<T>, a: &[[usize; 3]], b: &[[usize; 3]]) -> (Vec<[usize; 3]>, Vec<usize>, Vec<usize>) {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut ra, mut rb) = (Vec::with_capacity(a.len()), Vec::with_capacity(b.len()));
    while i < a.len() || j < b.len() {
        let la = a.get(i).map(|&x| spec.linear(x));
        let lb = b.get(j).map(|&x| spec.linear(x));
        let row = out.len();
        match (la, lb) {
            (Some(x), Some(y)) if x == y => {
                out.push(a[i]);
                ra.push(row);
                rb.push(row);
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                out.push(a[i]);
                ra.push(row);
                i += 1;
            }
            (Some(_), None) => {
                out.push(a[i]);
                ra.push(row);
                i += 1;
            }
            _ => {
                out.push(b[j]);
                rb.push(row);
                j += 1;
            }
        }
    }
    (out, ra, rb)
}

/// Bidirectional enhancement and four-way concatenation. `image_feats` and
/// `lidar_feats` are the tape handles of the two tensors' features.
#[allow(clippy::too_many_arguments)]
pub fn fuse_modalities_op<T: Real>(
    tape: &mut Tape<T>,
    image: &SparseVoxelTensor<T>,
    lidar: &SparseVoxelTensor<T>,
    image_feats: Var,
    lidar_feats: Var,
    module: &FusionModule<T>,
    vars: &FusionVars,
    rng: &RngStream,
    mode: KMode,
) -> Result<FusedOutput<T>> {
    if image.spec != lidar.spec {
        return Err(Error::Config("image and lidar tensors use different grids".into()));
    }
    if image.channels() != lidar.channels() {
        return Err(Error::Config(format!("image C = {} vs lidar C = {}", image.channels(), lidar.channels())));
    }
    let kk = module.selector.candidates.len();
    let centers = |t: &SparseVoxelTensor<T>| t.indices.iter().map(|&i| t.spec.center(i)).collect::<Vec<_>>();
    // Noise is keyed by voxel, not by direction, so swapping the modalities
    // (and the direction weights) swaps the output blocks exactly.
    let keys = |t: &SparseVoxelTensor<T>| t.linear_indices().into_iter().map(|l| l as u64).collect::<Vec<_>>();
    let noise_i = gumbel_noise(rng, &keys(image), kk);
    let noise_l = gumbel_noise(rng, &keys(lidar), kk);
    let ei = enhance_direction_op(
        tape, image_feats, &centers(image), lidar, lidar_feats, &module.selector, &vars.selector, vars.image_to_lidar, &noise_i, mode,
    )?;
    let el = enhance_direction_op(
        tape, lidar_feats, &centers(lidar), image, image_feats, &module.selector, &vars.selector, vars.lidar_to_image, &noise_l, mode,
    )?;
    let (indices, ri, rl) = union_rows(&image.spec, &image.indices, &lidar.indices);
    let n = indices.len();
    let blocks = [
        scatter_rows(tape, image_feats, &ri, n)?,
        scatter_rows(tape, lidar_feats, &rl, n)?,
        scatter_rows(tape, ei.weighted, &ri, n)?,
        scatter_rows(tape, el.weighted, &rl, n)?,
    ];
    let features = concat_cols(tape, &blocks)?;
    Ok(FusedOutput {
        features,
        indices,
        image_decisions: ei.decisions,
        lidar_decisions: el.decisions,
        image_k: ei.k,
        lidar_k: el.k,
    })
}

/// Tape-free fusion.
pub fn fuse_modalities<T: Real>(
    image: &SparseVoxelTensor<T>,
    lidar: &SparseVoxelTensor<T>,
    module: &FusionModule<T>,
    rng: &RngStream,
) -> Result<(FusedVoxelTensor<T>, Vec<KDecision<T>>, Vec<KDecision<T>>)> {
    let mut tape = Tape::new();
    let fi = tape.constant(image.features.clone());
    let fl = tape.constant(lidar.features.clone());
    let vars = module.bind(&mut tape);
    let out = fuse_modalities_op(&mut tape, image, lidar, fi, fl, module, &vars, rng, KMode::StraightThrough)?;
    let fused = FusedVoxelTensor { spec: image.spec, indices: out.indices, features: tape.value(out.features).clone() };
    Ok((fused, out.image_decisions, out.lidar_decisions))
}
