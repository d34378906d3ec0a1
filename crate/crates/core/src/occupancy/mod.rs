//! Per-voxel semantic occupancy head and IoU metrics.

pub mod grid;
pub mod head;

pub use grid::{iou_miou, OccupancyGrid, OccupancyMetrics};
pub use head::{occupancy_head, occupancy_head_op, predict, HeadParams, HeadVars};
