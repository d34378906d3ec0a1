//! Dense tensors, differentiable primitives with explicit vector-Jacobian
//! products, AdamW, and the finite-difference gradient oracle.

pub mod gradcheck;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use gradcheck::{check_tape_fn, finite_diff_check, GradCheckReport, ParamCheck};
pub use nn::{glorot_uniform, mlp_forward, Layer, Mlp, MlpVars};
pub use ops::Activation;
pub use optim::{adamw_step, cosine_lr, AdamW, AdamWState};
pub use rng::RngStream;
pub use tape::{accumulate_all, bind_all, Gradients, Parameter, Tape, Var, Vjp};
pub use tensor::Tensor;
