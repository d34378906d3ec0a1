//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use crate::diffcore::tape::Parameter;
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct AdamWState<T: Real> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub step: u64,
    pub lr0: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
}

impl<T: Real> AdamWState<T> {
    /// Defaults: β = (0.9, 0.999), ε = 1e-8.
    pub fn new(shape: &[usize], lr0: T, weight_decay: T) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
            lr0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            weight_decay,
        }
    }

    pub fn for_param(p: &Parameter<T>, lr0: T, weight_decay: T) -> Self {
        Self::new(p.shape(), lr0, weight_decay)
    }
}

/// One AdamW update. The gradient is left in place; callers clear it.
pub fn adamw_step<T: Real>(p: &mut Parameter<T>, s: &mut AdamWState<T>, lr: T) -> Result<()> {
    if !p.grad.all_finite() {
        return Err(Error::Optimizer(p.name.clone()));
    }
    if s.m.shape() != p.value.shape() {
        return Err(Error::dim(format!("optimizer state {:?} for parameter {:?}", s.m.shape(), p.shape())));
    }
    s.step += 1;
    let t = i32::try_from(s.step).unwrap_or(i32::MAX);
    let bc1 = T::one() - s.beta1.powi(t);
    let bc2 = T::one() - s.beta2.powi(t);
    let decay = T::one() - lr * s.weight_decay;
    let (b1, b2, eps) = (s.beta1, s.beta2, s.eps);
    let value = p.value.data_mut();
    let grad = p.grad.data();
    let m = s.m.data_mut();
    let v = s.v.data_mut();
    for i in 0..value.len() {
        let g = grad[i];
        value[i] = value[i] * decay;
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        value[i] = value[i] - lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// `lr0 · ½ (1 + cos(π·step/total))`.
pub fn cosine_lr<T: Real>(step: usize, total_steps: usize, lr0: T) -> Result<T> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::Range(format!("cosine step {step} of {total_steps}")));
    }
    let frac = T::of_usize(step) / T::of_usize(total_steps);
    Ok(lr0 * T::of(0.5) * (T::one() + (T::PI() * frac).cos()))
}

/// AdamW over a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct AdamW<T: Real> {
    pub states: Vec<AdamWState<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &[&Parameter<T>], lr0: T, weight_decay: T) -> Self {
        Self { states: params.iter().map(|p| AdamWState::for_param(p, lr0, weight_decay)).collect() }
    }

    pub fn step(&mut self, params: Vec<&mut Parameter<T>>, lr: T) -> Result<()> {
        if params.len() != self.states.len() {
            return Err(Error::dim(format!("{} parameters for {} optimizer states", params.len(), self.states.len())));
        }
        for (p, s) in params.into_iter().zip(&mut self.states) {
            adamw_step(p, s, lr)?;
        }
        Ok(())
    }
}
