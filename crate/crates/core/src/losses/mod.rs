//! Occupancy, photometric and consistency losses, and the two-phase total.

pub mod classification;
pub mod consistency;
pub mod photometric;
pub mod report;
pub mod ssim;

pub use classification::{
    cross_entropy, cross_entropy_op, lovasz_grad, lovasz_softmax, lovasz_softmax_op, occupancy_loss, occupancy_loss_op, LossValue,
    OccupancyLossVars,
};
pub use consistency::{param_consistency, param_consistency_op};
pub use photometric::{mean_l1_with_grad, photometric_loss, photometric_op, tensor_to_image, Photometric};
pub use report::{total_loss, total_loss_op, LossComponents, LossReport, Phase, CSV_HEADER};
pub use ssim::{d_ssim, d_ssim_with_grad, ssim, SsimParams};
