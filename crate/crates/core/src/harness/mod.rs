//! Synthetic scenes, the two-phase training loop, reporting, and ablations.

pub mod config;
pub mod gradcheck;
pub mod scene;
pub mod stats;
pub mod train;

pub use config::{RunConfig, SceneObject, SceneSpec, Shape, SizeClass, Variant};
pub use scene::{generate_scene, Scene};
pub use stats::{ablate, k_stats, k_table, AblationRow, AblationTable, KTable};
pub use train::{prepare_inputs, train, MetricsReport, Model, StepGrads, Trainer};
