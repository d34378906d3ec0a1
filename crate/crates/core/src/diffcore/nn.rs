//! Multilayer perceptrons built from `linear` + `activation`.

use crate::diffcore::ops::{activation, linear, Activation};
use crate::diffcore::rng::RngStream;
use crate::diffcore::tape::{Gradients, Parameter, Tape, Var};
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform(−a, a) with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.uniform(-a, a))).collect();
    Tensor::new(shape, data).expect("shape matches count")
}

#[derive(Clone, Debug)]
pub struct Layer<T: Real> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn new(name: &str, cin: usize, cout: usize, activation: Activation, rng: &mut RngStream) -> Self {
        Self {
            weight: Parameter::new(format!("{name}.weight"), glorot_uniform(&[cin, cout], cin, cout, rng)),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            activation,
        }
    }

    pub fn zeros(name: &str, cin: usize, cout: usize, activation: Activation) -> Self {
        Self {
            weight: Parameter::new(format!("{name}.weight"), Tensor::zeros(&[cin, cout])),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Clone, Debug)]
pub struct Mlp<T: Real> {
    pub layers: Vec<Layer<T>>,
}

/// Tape handles for one bound [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var, Activation)>,
}

impl<T: Real> Mlp<T> {
    /// `widths = [in, hidden.., out]`; hidden layers use `hidden`, the last layer
    /// is linear and emits logits.
    pub fn new(name: &str, widths: &[usize], hidden: Activation, rng: &mut RngStream) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Identity } else { hidden };
                Layer::new(&format!("{name}.{i}"), widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("empty layer list".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::dim(format!("layer widths {} → {} do not chain", w[0].out_dim(), w[1].in_dim())));
            }
        }
        for l in &layers {
            if l.bias.value.len() != l.out_dim() {
                return Err(Error::dim(format!("bias {:?} for {} outputs", l.bias.shape(), l.out_dim())));
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.param(&l.weight), tape.param(&l.bias), l.activation))
                .collect(),
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn accumulate(&mut self, grads: &Gradients<T>, vars: &MlpVars) {
        for (l, &(w, b, _)) in self.layers.iter_mut().zip(&vars.layers) {
            grads.accumulate_into(&mut l.weight, w);
            grads.accumulate_into(&mut l.bias, b);
        }
    }

    /// Tape-free evaluation.
    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let y = mlp_forward(&mut tape, xv, &vars.layers)?;
        Ok(tape.value(y).clone())
    }
}

/// Composition of `linear` and each layer's activation.
pub fn mlp_forward<T: Real>(tape: &mut Tape<T>, x: Var, layers: &[(Var, Var, Activation)]) -> Result<Var> {
    let mut h = x;
    for &(w, b, act) in layers {
        h = linear(tape, h, w, b)?;
        h = activation(tape, h, act);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input() {
        let mut l = Layer::<f64>::zeros("id", 3, 3, Activation::Identity);
        l.weight.value = Tensor::identity(3);
        let mlp = Mlp::from_layers(vec![l]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.5]]);
        assert_eq!(mlp.eval(&x).unwrap(), x);
    }

    #[test]
    fn two_layer_shape_contract() {
        let mut rng = RngStream::new(0);
        let mlp = Mlp::<f64>::new("m", &[16, 32, 4], Activation::Relu, &mut rng);
        let x = Tensor::zeros(&[5, 16]);
        assert_eq!(mlp.eval(&x).unwrap().shape(), &[5, 4]);
        assert_eq!(mlp.layers[1].activation, Activation::Identity);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let a = Layer::<f64>::zeros("a", 2, 3, Activation::Relu);
        let b = Layer::<f64>::zeros("b", 4, 1, Activation::Identity);
        assert!(Mlp::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = RngStream::new(5);
        let w: Tensor<f64> = glorot_uniform(&[10, 20], 10, 20, &mut rng);
        let a = (6.0f64 / 30.0).sqrt();
        assert!(w.data().iter().all(|&v| v.abs() <= a));
    }
}
