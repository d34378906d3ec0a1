//! Differentiable primitives recorded on a [`Tape`].

use crate::diffcore::tape::{Tape, Var, Vjp};
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    Tanh,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => softplus(x),
            Activation::Exp => x.exp(),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Softplus => sigmoid(x),
            Activation::Exp => y,
            Activation::Tanh => T::one() - y * y,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "identity" | "none" => Activation::Identity,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "softplus" => Activation::Softplus,
            "exp" => Activation::Exp,
            "tanh" => Activation::Tanh,
            _ => return None,
        })
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Real>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Row-wise stabilized softmax of a 1-D or 2-D tensor.
pub fn softmax_values<T: Real>(z: &Tensor<T>) -> Tensor<T> {
    let mut out = z.clone();
    let cols = z.cols();
    if cols == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(cols) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s = s + *v;
        }
        for v in row.iter_mut() {
            *v = *v / s;
        }
    }
    out
}

struct LinearOp;

impl<T: Real> Vjp<T> for LinearOp {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _out: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let dx = g.matmul(&w.transpose().expect("2-D")).expect("conforming");
        let dw = x.transpose().expect("2-D").matmul(g).expect("conforming");
        let cout = g.cols();
        let mut db = vec![T::zero(); cout];
        for row in g.data().chunks(cout) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d = *d + v;
            }
        }
        vec![Some(dx), Some(dw), Some(Tensor::vector(db))]
    }
}

/// `y = x·W + b` for `x: N×Cin`, `W: Cin×Cout`, `b: Cout`.
pub fn linear<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let (xv, wv, bv) = (tape.value(x), tape.value(w), tape.value(b));
    if xv.shape().len() != 2 || wv.shape().len() != 2 || xv.shape()[1] != wv.shape()[0] {
        return Err(Error::dim(format!("linear: x {:?} vs W {:?}", xv.shape(), wv.shape())));
    }
    if bv.len() != wv.shape()[1] {
        return Err(Error::dim(format!("linear: bias {:?} vs W {:?}", bv.shape(), wv.shape())));
    }
    let mut y = xv.matmul(wv)?;
    let cout = bv.len();
    if cout > 0 {
        for row in y.data_mut().chunks_mut(cout) {
            for (v, &bb) in row.iter_mut().zip(bv.data()) {
                *v = *v + bb;
            }
        }
    }
    Ok(tape.push(&[x, w, b], y, LinearOp))
}

struct ActivationOp(Activation);

impl<T: Real> Vjp<T> for ActivationOp {
    fn name(&self) -> &'static str {
        "activation"
    }

    fn backward(&self, inputs: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0];
        let data = x
            .data()
            .iter()
            .zip(out.data())
            .zip(g.data())
            .map(|((&xi, &yi), &gi)| gi * self.0.derivative(xi, yi))
            .collect();
        vec![Some(Tensor::new(x.shape(), data).expect("same shape"))]
    }
}

pub fn activation<T: Real>(tape: &mut Tape<T>, x: Var, kind: Activation) -> Var {
    if kind == Activation::Identity {
        return x;
    }
    let y = tape.value(x).map(|v| kind.apply(v));
    tape.push(&[x], y, ActivationOp(kind))
}

struct SoftmaxOp;

impl<T: Real> Vjp<T> for SoftmaxOp {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], y: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let cols = y.cols();
        let mut dz = g.clone();
        for (drow, yrow) in dz.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
            let dot: T = drow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
            for (d, &yy) in drow.iter_mut().zip(yrow) {
                *d = yy * (*d - dot);
            }
        }
        vec![Some(dz)]
    }
}

/// Row-wise softmax (1-D input is one row).
pub fn softmax<T: Real>(tape: &mut Tape<T>, z: Var) -> Var {
    let y = softmax_values(tape.value(z));
    tape.push(&[z], y, SoftmaxOp)
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

struct BinaryOp(Binary);

impl<T: Real> Vjp<T> for BinaryOp {
    fn name(&self) -> &'static str {
        "binary"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _out: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        match self.0 {
            Binary::Add => vec![Some(g.clone()), Some(g.clone())],
            Binary::Sub => vec![Some(g.clone()), Some(g.map(|v| -v))],
            Binary::Mul => vec![
                Some(g.zip_map(inputs[1], |a, b| a * b).expect("same shape")),
                Some(g.zip_map(inputs[0], |a, b| a * b).expect("same shape")),
            ],
        }
    }
}

fn binary<T: Real>(tape: &mut Tape<T>, a: Var, b: Var, kind: Binary) -> Result<Var> {
    let f = match kind {
        Binary::Add => |x: T, y: T| x + y,
        Binary::Sub => |x: T, y: T| x - y,
        Binary::Mul => |x: T, y: T| x * y,
    };
    let v = tape.value(a).zip_map(tape.value(b), f)?;
    Ok(tape.push(&[a, b], v, BinaryOp(kind)))
}

pub fn add<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    binary(tape, a, b, Binary::Add)
}

pub fn sub<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    binary(tape, a, b, Binary::Sub)
}

/// Elementwise product.
pub fn mul<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    binary(tape, a, b, Binary::Mul)
}

struct ScaleOp<T>(T);

impl<T: Real> Vjp<T> for ScaleOp<T> {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, _i: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.scale(self.0))]
    }
}

pub fn scale<T: Real>(tape: &mut Tape<T>, a: Var, s: T) -> Var {
    let v = tape.value(a).scale(s);
    tape.push(&[a], v, ScaleOp(s))
}

struct ShiftOp;

impl<T: Real> Vjp<T> for ShiftOp {
    fn name(&self) -> &'static str {
        "shift"
    }

    fn backward(&self, _i: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.clone())]
    }
}

/// `a + c` for a constant tensor `c` of the same shape.
pub fn shift<T: Real>(tape: &mut Tape<T>, a: Var, c: &Tensor<T>) -> Result<Var> {
    let v = tape.value(a).zip_map(c, |x, y| x + y)?;
    Ok(tape.push(&[a], v, ShiftOp))
}

struct SumOp;

impl<T: Real> Vjp<T> for SumOp {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(Tensor::full(inputs[0].shape(), g.data()[0]))]
    }
}

pub fn sum<T: Real>(tape: &mut Tape<T>, a: Var) -> Var {
    let v = Tensor::scalar(tape.value(a).sum());
    tape.push(&[a], v, SumOp)
}

pub fn mean<T: Real>(tape: &mut Tape<T>, a: Var) -> Var {
    let n = tape.value(a).len().max(1);
    let s = sum(tape, a);
    scale(tape, s, T::one() / T::of_usize(n))
}

struct ConcatColsOp {
    widths: Vec<usize>,
}

impl<T: Real> Vjp<T> for ConcatColsOp {
    fn name(&self) -> &'static str {
        "concat_cols"
    }

    fn backward(&self, inputs: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let total = out.cols();
        let rows = out.rows();
        let mut offset = 0;
        let mut res = Vec::with_capacity(inputs.len());
        for (inp, &w) in inputs.iter().zip(&self.widths) {
            let mut d = Vec::with_capacity(rows * w);
            for r in 0..rows {
                d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
            }
            res.push(Some(Tensor::new(inp.shape(), d).expect("shape")));
            offset += w;
        }
        res
    }
}

/// Concatenates 2-D tensors with equal row counts along columns.
pub fn concat_cols<T: Real>(tape: &mut Tape<T>, parts: &[Var]) -> Result<Var> {
    let rows = tape.value(parts[0]).rows();
    let mut widths = Vec::with_capacity(parts.len());
    for &p in parts {
        let v = tape.value(p);
        if v.shape().len() != 2 || v.rows() != rows {
            return Err(Error::dim(format!("concat_cols: {:?} with {rows} rows", v.shape())));
        }
        widths.push(v.cols());
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for &p in parts {
            data.extend_from_slice(tape.value(p).row(r));
        }
    }
    let v = Tensor::new(&[rows, total], data)?;
    Ok(tape.push(parts, v, ConcatColsOp { widths }))
}

struct GatherRowsOp {
    idx: Vec<usize>,
}

impl<T: Real> Vjp<T> for GatherRowsOp {
    fn name(&self) -> &'static str {
        "gather_rows"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let mut d = Tensor::zeros(inputs[0].shape());
        for (r, &src) in self.idx.iter().enumerate() {
            let grow = g.row(r).to_vec();
            for (a, b) in d.row_mut(src).iter_mut().zip(grow) {
                *a = *a + b;
            }
        }
        vec![Some(d)]
    }
}

/// Selects rows (repeats allowed) of a 2-D tensor.
pub fn gather_rows<T: Real>(tape: &mut Tape<T>, a: Var, idx: &[usize]) -> Result<Var> {
    let av = tape.value(a);
    if av.shape().len() != 2 {
        return Err(Error::dim(format!("gather_rows on {:?}", av.shape())));
    }
    let cols = av.cols();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        if i >= av.rows() {
            return Err(Error::dim(format!("row {i} out of {}", av.rows())));
        }
        data.extend_from_slice(av.row(i));
    }
    let v = Tensor::new(&[idx.len(), cols], data)?;
    Ok(tape.push(&[a], v, GatherRowsOp { idx: idx.to_vec() }))
}

struct RowDotOp<T> {
    weights: Vec<T>,
}

impl<T: Real> Vjp<T> for RowDotOp<T> {
    fn name(&self) -> &'static str {
        "row_dot"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let k = self.weights.len();
        let mut d = Vec::with_capacity(inputs[0].len());
        for &gi in g.data() {
            d.extend(self.weights.iter().map(|&w| gi * w));
        }
        debug_assert_eq!(d.len(), g.len() * k);
        vec![Some(Tensor::new(inputs[0].shape(), d).expect("shape"))]
    }
}

/// Per-row dot product with a constant vector: `N×K → N`.
pub fn row_dot<T: Real>(tape: &mut Tape<T>, a: Var, weights: &[T]) -> Result<Var> {
    let av = tape.value(a);
    if av.cols() != weights.len() {
        return Err(Error::dim(format!("row_dot: {:?} vs {} weights", av.shape(), weights.len())));
    }
    let out: Vec<T> = (0..av.rows())
        .map(|r| av.row(r).iter().zip(weights).map(|(&x, &w)| x * w).sum())
        .collect();
    let v = Tensor::vector(out);
    Ok(tape.push(&[a], v, RowDotOp { weights: weights.to_vec() }))
}

struct L1DistanceOp<T> {
    target: Tensor<T>,
}

impl<T: Real> Vjp<T> for L1DistanceOp<T> {
    fn name(&self) -> &'static str {
        "l1_distance"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let g0 = g.data()[0];
        let d = inputs[0]
            .zip_map(&self.target, |a, b| {
                let diff = a - b;
                if diff > T::zero() {
                    g0
                } else if diff < T::zero() {
                    -g0
                } else {
                    T::zero()
                }
            })
            .expect("same shape");
        vec![Some(d)]
    }
}

/// `Σ |a − target|` with `target` held constant.
pub fn l1_distance<T: Real>(tape: &mut Tape<T>, a: Var, target: &Tensor<T>) -> Result<Var> {
    let av = tape.value(a);
    let s: T = av.zip_map(target, |x, y| (x - y).abs())?.sum();
    Ok(tape.push(&[a], Tensor::scalar(s), L1DistanceOp { target: target.clone() }))
}

struct ReshapeOp;

impl<T: Real> Vjp<T> for ReshapeOp {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.clone().reshape(inputs[0].shape()).expect("same length"))]
    }
}

pub fn reshape<T: Real>(tape: &mut Tape<T>, a: Var, shape: &[usize]) -> Result<Var> {
    let v = tape.value(a).clone().reshape(shape)?;
    Ok(tape.push(&[a], v, ReshapeOp))
}

struct ScatterRowsOp {
    rows: Vec<usize>,
}

impl<T: Real> Vjp<T> for ScatterRowsOp {
    fn name(&self) -> &'static str {
        "scatter_rows"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let cols = inputs[0].cols();
        let mut d = Vec::with_capacity(self.rows.len() * cols);
        for &r in &self.rows {
            d.extend_from_slice(g.row(r));
        }
        vec![Some(Tensor::new(inputs[0].shape(), d).expect("shape"))]
    }
}

/// Places row `i` of `a` at row `rows[i]` of an `n`-row zero matrix.
/// Destination rows must be distinct.
pub fn scatter_rows<T: Real>(tape: &mut Tape<T>, a: Var, rows: &[usize], n: usize) -> Result<Var> {
    let av = tape.value(a);
    if av.shape().len() != 2 || av.rows() != rows.len() {
        return Err(Error::dim(format!("scatter_rows: {:?} for {} destinations", av.shape(), rows.len())));
    }
    let cols = av.cols();
    let mut out = Tensor::zeros(&[n, cols]);
    let mut seen = vec![false; n];
    for (i, &r) in rows.iter().enumerate() {
        if r >= n || std::mem::replace(&mut seen[r], true) {
            return Err(Error::dim(format!("scatter_rows: bad or repeated destination {r} of {n}")));
        }
        out.row_mut(r).copy_from_slice(av.row(i));
    }
    Ok(tape.push(&[a], out, ScatterRowsOp { rows: rows.to_vec() }))
}

struct SliceColsOp {
    start: usize,
}

impl<T: Real> Vjp<T> for SliceColsOp {
    fn name(&self) -> &'static str {
        "slice_cols"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let mut d = Tensor::zeros(inputs[0].shape());
        let w = g.cols();
        for r in 0..g.rows() {
            d.row_mut(r)[self.start..self.start + w].copy_from_slice(g.row(r));
        }
        vec![Some(d)]
    }
}

/// Columns `start..end` of a 2-D tensor.
pub fn slice_cols<T: Real>(tape: &mut Tape<T>, a: Var, start: usize, end: usize) -> Result<Var> {
    let av = tape.value(a);
    if av.shape().len() != 2 || start > end || end > av.cols() {
        return Err(Error::dim(format!("slice_cols {start}..{end} of {:?}", av.shape())));
    }
    let rows = av.rows();
    let mut data = Vec::with_capacity(rows * (end - start));
    for r in 0..rows {
        data.extend_from_slice(&av.row(r)[start..end]);
    }
    let v = Tensor::new(&[rows, end - start], data)?;
    Ok(tape.push(&[a], v, SliceColsOp { start }))
}

struct GatherSlotsOp {
    slots: Vec<Option<usize>>,
}

impl<T: Real> Vjp<T> for GatherSlotsOp {
    fn name(&self) -> &'static str {
        "gather_slots"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let c = inputs[0].cols();
        let mut d = Tensor::zeros(inputs[0].shape());
        for (s, src) in self.slots.iter().enumerate() {
            if let Some(r) = *src {
                let gs = &g.data()[s * c..(s + 1) * c];
                for (a, &b) in d.row_mut(r).iter_mut().zip(gs) {
                    *a = *a + b;
                }
            }
        }
        vec![Some(d)]
    }
}

/// Lays out rows of `a` in fixed slots, `per_row` slots per output row;
/// `None` slots are zero. Output is `(slots / per_row) × (per_row·C)`.
pub fn gather_slots<T: Real>(tape: &mut Tape<T>, a: Var, slots: &[Option<usize>], per_row: usize) -> Result<Var> {
    let av = tape.value(a);
    if av.shape().len() != 2 || per_row == 0 || slots.len() % per_row != 0 {
        return Err(Error::dim(format!("gather_slots: {:?}, {} slots of {per_row}", av.shape(), slots.len())));
    }
    let c = av.cols();
    let mut data = vec![T::zero(); slots.len() * c];
    for (s, src) in slots.iter().enumerate() {
        if let Some(r) = *src {
            if r >= av.rows() {
                return Err(Error::dim(format!("gather_slots: row {r} of {}", av.rows())));
            }
            data[s * c..(s + 1) * c].copy_from_slice(av.row(r));
        }
    }
    let v = Tensor::new(&[slots.len() / per_row, per_row * c], data)?;
    Ok(tape.push(&[a], v, GatherSlotsOp { slots: slots.to_vec() }))
}

/// Linear combination `Σ cᵢ·vᵢ` of single-element vars.
pub fn weighted_sum<T: Real>(tape: &mut Tape<T>, terms: &[(T, Var)]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &(c, v) in terms {
        let scaled = scale(tape, v, c);
        acc = Some(match acc {
            None => scaled,
            Some(a) => add(tape, a, scaled)?,
        });
    }
    acc.ok_or_else(|| Error::dim("weighted_sum of no terms"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_of(tape: &Tape<f64>, root: Var, v: Var) -> Tensor<f64> {
        let g = tape.backward(root).unwrap();
        g.wrt(tape, v)
    }

    #[test]
    fn linear_basis_and_identity() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[vec![1.0, 0.0]]));
        let w = t.leaf(Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]));
        let b = t.leaf(Tensor::vector(vec![0.0, 0.0]));
        let y = linear(&mut t, x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[2.0, 0.0]);

        let x = t.constant(Tensor::from_rows(&[vec![1.0, 1.0]]));
        let w = t.leaf(Tensor::identity(2));
        let b = t.leaf(Tensor::vector(vec![1.0, 1.0]));
        let y = linear(&mut t, x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[2.0, 2.0]);
    }

    #[test]
    fn linear_shape_mismatch() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(&[2, 3]));
        let w = t.leaf(Tensor::zeros(&[2, 2]));
        let b = t.leaf(Tensor::zeros(&[2]));
        assert!(matches!(linear(&mut t, x, w, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn activations_simple_values() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::vector(vec![-1.0, 2.0]));
        let r = activation(&mut t, x, Activation::Relu);
        assert_eq!(t.value(r).data(), &[0.0, 2.0]);
        let z = t.leaf(Tensor::vector(vec![0.0]));
        let s = activation(&mut t, z, Activation::Sigmoid);
        assert_eq!(t.value(s).data(), &[0.5]);
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::<f64>::new();
        let z = t.leaf(Tensor::vector(vec![0.0; 4]));
        let y = softmax(&mut t, z);
        assert_eq!(t.value(y).data(), &[0.25; 4]);
        let z = t.leaf(Tensor::vector(vec![2f64.ln(), 0.0]));
        let y = softmax(&mut t, z);
        let d = t.value(y).data();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15 && (d[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let c = t.constant(Tensor::vector(vec![3.0, 4.0]));
        let p = mul(&mut t, a, c).unwrap();
        let s = sum(&mut t, p);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(&t, a).data(), &[3.0, 4.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn gather_scatters_back() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let g = gather_rows(&mut t, a, &[1, 1, 0]).unwrap();
        let s = sum(&mut t, g);
        assert_eq!(grad_of(&t, s, a).data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_and_row_dot() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::from_rows(&[vec![1.0], vec![2.0]]));
        let b = t.leaf(Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]));
        let c = concat_cols(&mut t, &[a, b]).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let d = row_dot(&mut t, c, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.value(d).data(), &[19.0, 30.0]);
        let s = sum(&mut t, d);
        assert_eq!(grad_of(&t, s, b).data(), &[2.0, 3.0, 2.0, 3.0]);
    }
}
