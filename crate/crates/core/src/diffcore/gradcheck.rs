//! Central finite-difference verification of analytic gradients.

use std::fmt;

use crate::diffcore::tape::{Parameter, Tape, Var};
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-parameter outcome.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.params.iter().all(|p| p.pass)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<32} n={:<5} max_rel={:.3e} max_abs={:.3e} {}",
                p.name,
                p.entries,
                p.max_rel_err,
                p.max_abs_err,
                if p.pass { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Relative error with an absolute floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Denominator floor used when both gradients are near zero.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient returned by `f` against
/// `(f(θ+eps) − f(θ−eps)) / (2·eps)` for every entry of every parameter.
///
/// `f` maps parameter values to `(loss, gradients)` with one gradient per
/// parameter, in order. Evaluating `f` twice at the same point must give the
/// same loss bit for bit; otherwise a check error is returned.
pub fn finite_diff_check<T, F>(mut f: F, params: &[Parameter<T>], eps: T, tol: T) -> Result<GradCheckReport>
where
    T: Real,
    F: FnMut(&[Tensor<T>]) -> Result<(T, Vec<Tensor<T>>)>,
{
    let mut values: Vec<Tensor<T>> = params.iter().map(|p| p.value.clone()).collect();
    let (l0, analytic) = f(&values)?;
    let (l1, _) = f(&values)?;
    if l0.to_f64_lossy().to_bits() != l1.to_f64_lossy().to_bits() {
        return Err(Error::Check(format!("function is not deterministic: {l0} vs {l1}")));
    }
    if analytic.len() != params.len() {
        return Err(Error::Check(format!("{} gradients for {} parameters", analytic.len(), params.len())));
    }
    let two_eps = eps + eps;
    let mut report = GradCheckReport { params: Vec::new(), tol: tol.to_f64_lossy() };
    for (pi, p) in params.iter().enumerate() {
        analytic[pi].expect_same_shape(&p.value)?;
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for j in 0..p.value.len() {
            let orig = values[pi].data()[j];
            values[pi].data_mut()[j] = orig + eps;
            let (lp, _) = f(&values)?;
            values[pi].data_mut()[j] = orig - eps;
            let (lm, _) = f(&values)?;
            values[pi].data_mut()[j] = orig;
            let numeric = ((lp - lm) / two_eps).to_f64_lossy();
            let a = analytic[pi].data()[j].to_f64_lossy();
            max_rel = max_rel.max(rel_err(a, numeric, REL_ERR_FLOOR));
            max_abs = max_abs.max((a - numeric).abs());
        }
        let pass = max_rel <= tol.to_f64_lossy() && max_rel.is_finite();
        report.params.push(ParamCheck { name: p.name.clone(), entries: p.value.len(), max_rel_err: max_rel, max_abs_err: max_abs, pass });
    }
    Ok(report)
}

/// [`finite_diff_check`] for a loss recorded on a tape: `build` receives one
/// leaf per parameter and returns the scalar loss.
pub fn check_tape_fn<T, B>(mut build: B, params: &[Parameter<T>], eps: T, tol: T) -> Result<GradCheckReport>
where
    T: Real,
    B: FnMut(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    finite_diff_check(
        |vals: &[Tensor<T>]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|v| tape.leaf(v.clone())).collect();
            let loss = build(&mut tape, &vars)?;
            let grads = tape.backward(loss)?;
            Ok((tape.scalar(loss), vars.iter().map(|&v| grads.wrt(&tape, v)).collect()))
        },
        params,
        eps,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_passes() {
        let p = Parameter::new("theta", Tensor::scalar(3.0f64));
        let report = finite_diff_check(
            |v| {
                let t = v[0].data()[0];
                Ok((t * t, vec![Tensor::scalar(2.0 * t)]))
            },
            &[p],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass());
        assert!(report.params[0].max_abs_err < 1e-9);
    }

    #[test]
    fn doubled_gradient_fails() {
        let p = Parameter::new("theta", Tensor::scalar(3.0f64));
        let report = finite_diff_check(
            |v| {
                let t = v[0].data()[0];
                Ok((t * t, vec![Tensor::scalar(4.0 * t)]))
            },
            &[p],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!report.pass());
        assert!((report.max_rel_err() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn nondeterminism_detected() {
        let p = Parameter::new("theta", Tensor::scalar(1.0f64));
        let mut calls = 0.0;
        let res = finite_diff_check(
            |v| {
                calls += 1.0;
                Ok((v[0].data()[0] + calls, vec![Tensor::scalar(1.0)]))
            },
            &[p],
            1e-5,
            1e-4,
        );
        assert!(matches!(res, Err(Error::Check(_))));
    }
}
