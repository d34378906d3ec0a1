use crate::diffcore::ops::{activation, linear};
use crate::diffcore::{glorot_uniform, Activation, Parameter, RngStream, Tape, Tensor, Var, Vjp};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Image queries retrieve lidar keys; produces the image-side weights.
    ImageToLidar,
    /// Lidar queries retrieve image keys.
    LidarToImage,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::ImageToLidar => "image_to_lidar",
            Direction::LidarToImage => "lidar_to_image",
        }
    }

    pub fn index(self) -> u64 {
        match self {
            Direction::ImageToLidar => 0,
            Direction::LidarToImage => 1,
        }
    }
}

/// Attention projection for one retrieval direction: `(k_max·C) → C`.
#[derive(Clone, Debug)]
pub struct FusionParams<T: Real> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Real> FusionParams<T> {
    pub fn new(direction: Direction, c: usize, k_max: usize, rng: &mut RngStream) -> Self {
        let name = direction.as_str();
        Self {
            weight: Parameter::new(format!("attn.{name}.weight"), glorot_uniform(&[k_max * c, c], k_max * c, c, rng)),
            bias: Parameter::new(format!("attn.{name}.bias"), Tensor::zeros(&[c])),
        }
    }

    pub fn zeros(direction: Direction, c: usize, k_max: usize) -> Self {
        let name = direction.as_str();
        Self {
            weight: Parameter::new(format!("attn.{name}.weight"), Tensor::zeros(&[k_max * c, c])),
            bias: Parameter::new(format!("attn.{name}.bias"), Tensor::zeros(&[c])),
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn k_max(&self) -> usize {
        self.weight.shape()[0] / self.channels().max(1)
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> (Var, Var) {
        (tape.param(&self.weight), tape.param(&self.bias))
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Openness of slot `j` (1-based) for a neighborhood of size `k`:
/// `clamp(k − j + 1, 0, 1)`, exactly `[j ≤ k]` at integer `k`.
fn slot_open<T: Real>(k: T, j: usize) -> T {
    (k - T::of_usize(j) + T::one()).max(T::zero()).min(T::one())
}

/// Central derivative of [`slot_open`]; ½ at the kinks.
fn slot_open_grad<T: Real>(k: T, j: usize) -> T {
    let s = k - T::of_usize(j) + T::one();
    if s > T::zero() && s < T::one() {
        T::one()
    } else if s == T::zero() || s == T::one() {
        T::of(0.5)
    } else {
        T::zero()
    }
}

struct SlotGateOp {
    c: usize,
}

impl<T: Real> Vjp<T> for SlotGateOp {
    fn name(&self) -> &'static str {
        "slot_gate"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (keys, k) = (inputs[0], inputs[1]);
        let width = keys.cols();
        let slots = width / self.c;
        let mut dkeys = Tensor::zeros(keys.shape());
        let mut dk = Vec::with_capacity(k.len());
        for (i, &ki) in k.data().iter().enumerate() {
            let grow = g.row(i);
            let krow = keys.row(i);
            let mut acc = T::zero();
            for j in 0..slots {
                let m = slot_open(ki, j + 1);
                let dm = slot_open_grad(ki, j + 1);
                let range = j * self.c..(j + 1) * self.c;
                for q in range {
                    dkeys.data_mut()[i * width + q] = grow[q] * m;
                    acc = acc + grow[q] * krow[q] * dm;
                }
            }
            dk.push(acc);
        }
        vec![Some(dkeys), Some(Tensor::new(k.shape(), dk).expect("shape"))]
    }
}

/// Multiplies each `C`-wide key slot by its openness under `k` (`[N]`).
pub fn slot_gate<T: Real>(tape: &mut Tape<T>, keys: Var, k: Var, c: usize) -> Result<Var> {
    let (kv, kk) = (tape.value(keys), tape.value(k));
    if kv.shape().len() != 2 || c == 0 || kv.cols() % c != 0 || kk.len() != kv.rows() {
        return Err(Error::dim(format!("slot_gate: keys {:?}, k {:?}, C = {c}", kv.shape(), kk.shape())));
    }
    let mut out = kv.clone();
    let width = kv.cols();
    for (i, &ki) in kk.data().iter().enumerate() {
        for j in 0..width / c {
            let m = slot_open(ki, j + 1);
            for v in &mut out.data_mut()[i * width + j * c..i * width + (j + 1) * c] {
                *v = *v * m;
            }
        }
    }
    Ok(tape.push(&[keys, k], out, SlotGateOp { c }))
}

struct GatherKeysOp {
    neighbors: Vec<Vec<usize>>,
}

impl<T: Real> Vjp<T> for GatherKeysOp {
    fn name(&self) -> &'static str {
        "gather_keys"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let src = inputs[0];
        let c = src.cols();
        let mut d = Tensor::zeros(src.shape());
        for (i, rows) in self.neighbors.iter().enumerate() {
            let grow = g.row(i);
            for (j, &r) in rows.iter().enumerate() {
                let drow = d.row_mut(r);
                for q in 0..c {
                    drow[q] = drow[q] + grow[j * c + q];
                }
            }
        }
        vec![Some(d)]
    }
}

/// Concatenates each query's neighbor rows of `target` in order and zero
/// pads to `k_max` slots: `N × (k_max·C)`.
pub fn gather_keys<T: Real>(tape: &mut Tape<T>, target: Var, neighbors: Vec<Vec<usize>>, k_max: usize) -> Result<Var> {
    let tv = tape.value(target);
    let c = tv.cols();
    let mut out = Tensor::zeros(&[neighbors.len(), k_max * c]);
    for (i, rows) in neighbors.iter().enumerate() {
        if rows.len() > k_max {
            return Err(Error::dim(format!("{} keys exceed k_max = {k_max}", rows.len())));
        }
        for (j, &r) in rows.iter().enumerate() {
            out.row_mut(i)[j * c..(j + 1) * c].copy_from_slice(tv.row(r));
        }
    }
    Ok(tape.push(&[target], out, GatherKeysOp { neighbors }))
}

/// `sigmoid(W·keys + b)` over padded key rows, `N × C`.
pub fn attention_op<T: Real>(tape: &mut Tape<T>, gated_keys: Var, fp: (Var, Var)) -> Result<Var> {
    let pre = linear(tape, gated_keys, fp.0, fp.1)?;
    Ok(activation(tape, pre, Activation::Sigmoid))
}

/// Single-query weights from `(feature, distance)` keys in distance order.
/// No keys means no evidence: the neutral weight ½ everywhere.
pub fn attention_weights<T: Real>(keys: &[(&[T], T)], k_max: usize, fp: &FusionParams<T>) -> Result<Tensor<T>> {
    let c = fp.channels();
    if keys.is_empty() {
        return Ok(Tensor::full(&[c], T::of(0.5)));
    }
    if keys.len() > k_max || k_max != fp.k_max() {
        return Err(Error::dim(format!("{} keys, k_max = {k_max}, weights sized for {}", keys.len(), fp.k_max())));
    }
    let mut x = vec![T::zero(); k_max * c];
    for (j, (f, _)) in keys.iter().enumerate() {
        if f.len() != c {
            return Err(Error::dim(format!("key has {} channels, expected {c}", f.len())));
        }
        x[j * c..(j + 1) * c].copy_from_slice(f);
    }
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::new(&[1, k_max * c], x)?);
    let fv = fp.bind(&mut tape);
    let w = attention_op(&mut tape, xv, fv)?;
    Ok(tape.value(w).clone().reshape(&[c])?)
}
