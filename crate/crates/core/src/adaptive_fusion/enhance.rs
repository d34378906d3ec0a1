use crate::adaptive_fusion::attention::{attention_op, gather_keys, slot_gate, FusionParams};
use crate::adaptive_fusion::selector::{gumbel_noise, select_k_op, KDecision, KMode, KSelectorParams};
use crate::diffcore::ops::mul;
use crate::diffcore::{MlpVars, RngStream, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::renderer::camera::Vec3;
use crate::scalar::Real;
use crate::sparse_voxel::{KnnIndex, QuerySet, SparseVoxelTensor};

pub struct Enhanced<T> {
    /// `query ⊙ ω`, `N × C`.
    pub weighted: Var,
    pub omega: Var,
    pub k: Var,
    pub decisions: Vec<KDecision<T>>,
    /// Target rows retrieved per query (always up to `k_max`; the gate hides
    /// the slots beyond `k`).
    pub neighbors: Vec<Vec<usize>>,
}

/// One retrieval direction: queries of modality A gather keys from modality B.
#[allow(clippy::too_many_arguments)]
pub fn enhance_direction_op<T: Real>(
    tape: &mut Tape<T>,
    query_feats: Var,
    centers: &[Vec3<T>],
    target: &SparseVoxelTensor<T>,
    target_feats: Var,
    kp: &KSelectorParams<T>,
    kp_vars: &MlpVars,
    fp_vars: (Var, Var),
    noise: &Tensor<T>,
    mode: KMode,
) -> Result<Enhanced<T>> {
    let qv = tape.value(query_feats);
    let (n, c) = (qv.rows(), qv.cols());
    if centers.len() != n {
        return Err(Error::dim(format!("{} centers for {n} queries", centers.len())));
    }
    if target.channels() != c || tape.value(target_feats).shape() != target.features.shape() {
        return Err(Error::Config(format!("query width {c} vs target {:?}", tape.value(target_feats).shape())));
    }
    let sel = select_k_op(tape, query_feats, kp, kp_vars, noise, mode)?;
    let k_max = kp.k_max();
    let (omega, neighbors) = if target.is_empty() {
        (tape.constant(Tensor::full(&[n, c], T::of(0.5))), vec![Vec::new(); n])
    } else {
        let index = KnnIndex::new(target);
        let neighbors: Vec<Vec<usize>> = centers.iter().map(|&p| index.query(p, k_max).into_iter().map(|nb| nb.row).collect()).collect();
        let keys = gather_keys(tape, target_feats, neighbors.clone(), k_max)?;
        let gated = slot_gate(tape, keys, sel.k, c)?;
        (attention_op(tape, gated, fp_vars)?, neighbors)
    };
    let weighted = mul(tape, query_feats, omega)?;
    Ok(Enhanced { weighted, omega, k: sel.k, decisions: sel.decisions, neighbors })
}

/// Tape-free evaluation; each query's Gumbel noise is keyed by its voxel.
pub fn enhance_direction<T: Real>(
    queries: &QuerySet<T>,
    target: &SparseVoxelTensor<T>,
    kp: &KSelectorParams<T>,
    fp: &FusionParams<T>,
    rng: &RngStream,
) -> Result<(Tensor<T>, Vec<KDecision<T>>)> {
    let mut tape = Tape::new();
    let q = tape.constant(queries.features.clone());
    let t = tape.constant(target.features.clone());
    let kv = kp.mlp.bind(&mut tape);
    let fv = fp.bind(&mut tape);
    let keys: Vec<u64> = queries.indices.iter().map(|&i| target.spec.linear(i) as u64).collect();
    let noise = gumbel_noise(rng, &keys, kp.candidates.len());
    let e = enhance_direction_op(&mut tape, q, &queries.centers, target, t, kp, &kv, fv, &noise, KMode::StraightThrough)?;
    Ok((tape.value(e.weighted).clone(), e.decisions))
}
