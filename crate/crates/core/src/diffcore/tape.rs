//! Flat forward trace with per-operation vector-Jacobian products.

use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Backward rule for one recorded operation.
///
/// `backward` receives the input values, the output value and the upstream
/// gradient, and returns one gradient per input (`None` when the input does
/// not receive one).
pub trait Vjp<T: Real> {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>>;
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node<T: Real> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    op: Option<Box<dyn Vjp<T>>>,
    tracked: bool,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, inputs: Vec::new(), op: None, tracked: true });
        Var(self.nodes.len() - 1)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, inputs: Vec::new(), op: None, tracked: false });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        self.leaf(p.value.clone())
    }

    /// Copy of `v` with the gradient path cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    /// Records the result of an operation together with its backward rule.
    pub fn push(&mut self, inputs: &[Var], value: Tensor<T>, op: impl Vjp<T> + 'static) -> Var {
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        let op: Option<Box<dyn Vjp<T>>> = if tracked { Some(Box::new(op)) } else { None };
        self.nodes.push(Node { value, inputs: inputs.to_vec(), op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a single-element output.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let value = self.value(root);
        if value.len() != 1 {
            return Err(Error::dim(format!("backward root must hold one value, got {:?}", value.shape())));
        }
        let seed = Tensor::full(value.shape(), T::one());
        self.backward_with(root, seed)
    }

    /// Reverse sweep seeded with an explicit upstream gradient for `root`.
    pub fn backward_with(&self, root: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        self.value(root).expect_same_shape(&seed)?;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = node.op.as_ref() else { continue };
            let Some(g) = grads[idx].take() else { continue };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = op.backward(&inputs, &node.value, &g);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{} returned wrong arity", op.name());
            for (input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[input.0].tracked {
                    continue;
                }
                debug_assert_eq!(
                    ig.shape(),
                    self.nodes[input.0].value.shape(),
                    "{} produced a gradient of the wrong shape",
                    op.name()
                );
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Result of a reverse sweep.
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros when nothing reached it.
    pub fn wrt(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }

    pub fn accumulate_into(&self, p: &mut Parameter<T>, v: Var) {
        if let Some(g) = self.get(v) {
            p.grad.add_assign(g);
        }
    }
}

/// Learnable tensor with an accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad = Tensor::zeros(self.value.shape());
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

/// Binds a list of parameters onto a tape, in order.
pub fn bind_all<T: Real>(tape: &mut Tape<T>, params: &[&Parameter<T>]) -> Vec<Var> {
    params.iter().map(|p| tape.param(p)).collect()
}

/// Adds the gradients of `vars` into the matching parameters.
pub fn accumulate_all<T: Real>(grads: &Gradients<T>, params: Vec<&mut Parameter<T>>, vars: &[Var]) {
    assert_eq!(params.len(), vars.len(), "parameter/var count mismatch");
    for (p, &v) in params.into_iter().zip(vars) {
        grads.accumulate_into(p, v);
    }
}
