//! Adaptive cross-modal voxel fusion with differentiable Gaussian-splatting
//! supervision for semantic occupancy prediction.
//!
//! The numeric modules are generic over [`Real`]; the aliases below pin the
//! `f64` instantiation the training harness runs in.

pub mod adaptive_fusion;
pub mod diffcore;
pub mod error;
pub mod gaussian_field;
pub mod harness;
pub mod losses;
pub mod occupancy;
pub mod renderer;
pub mod scalar;
pub mod sparse_voxel;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor = diffcore::Tensor<f64>;
pub type Parameter = diffcore::Parameter<f64>;
pub type Tape = diffcore::Tape<f64>;
