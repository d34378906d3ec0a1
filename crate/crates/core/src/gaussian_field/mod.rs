//! Gaussian primitives, their initialization from fused features, and
//! densification.

pub mod anchors;
pub mod checkpoint;
pub mod densify;
pub mod init_net;
pub mod primitive;

pub use anchors::{collect_anchors, Anchor};
pub use checkpoint::{field_from_text, field_to_text, read_field, write_field};
pub use densify::{densify, DensifyConfig, DensifyStats};
pub use init_net::{expmap_op, init_gaussians, init_gaussians_op, InitNetParams, InitNetVars, InitOutput};
pub use primitive::{GaussianField, GaussianPrimitive, Provenance, PARAMS_PER_PRIMITIVE};
