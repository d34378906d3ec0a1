//! L1 distance between converged and initial Gaussian parameters.

use crate::diffcore::ops::{add, l1_distance};
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gaussian_field::GaussianField;
use crate::scalar::Real;

/// `Σᵢ ‖Θᵢ_final − Θᵢ_init‖₁` over every raw parameter field.
pub fn param_consistency<T: Real>(theta_final: &GaussianField<T>, theta_init: &GaussianField<T>) -> Result<T> {
    if theta_final.len() != theta_init.len() {
        return Err(Error::Consistency(format!("{} final primitives vs {} initial", theta_final.len(), theta_init.len())));
    }
    Ok(theta_final
        .primitives
        .iter()
        .zip(&theta_init.primitives)
        .map(|(a, b)| a.raw().iter().zip(b.raw().iter()).map(|(&x, &y)| (x - y).abs()).sum::<T>())
        .sum())
}

/// Records the consistency loss. `theta_init` holds the five differentiable
/// parameter groups; `theta_final` is the frozen converged snapshot.
pub fn param_consistency_op<T: Real>(tape: &mut Tape<T>, theta_init: [Var; 5], theta_final: &[Tensor<T>; 5]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (v, target) in theta_init.iter().zip(theta_final) {
        if tape.value(*v).shape() != target.shape() {
            return Err(Error::Consistency(format!("initial group {:?} vs final {:?}", tape.value(*v).shape(), target.shape())));
        }
        let term = l1_distance(tape, *v, target)?;
        acc = Some(match acc {
            None => term,
            Some(a) => add(tape, a, term)?,
        });
    }
    acc.ok_or_else(|| Error::Consistency("no parameter groups".into()))
}
