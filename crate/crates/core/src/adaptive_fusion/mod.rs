//! Adaptive neighborhood selection and cross-modal attention fusion.

pub mod attention;
pub mod enhance;
pub mod fusion;
pub mod selector;

pub use attention::{attention_weights, Direction, FusionParams};
pub use enhance::{enhance_direction, enhance_direction_op, Enhanced};
pub use fusion::{fuse_modalities, fuse_modalities_op, FusedOutput, FusedVoxelTensor, FusionModule, FusionVars};
pub use selector::{
    decision_from, decisions_csv, gumbel_noise, gumbel_softmax, gumbel_softmax_op, select_k, select_k_op, KDecision, KMode, KSelection,
    KSelectorParams,
};
