//! Differentiable splat rasterization.

pub mod camera;
pub mod image;
pub mod project;
pub mod raster;

pub use camera::Camera;
pub use image::Image;
pub use project::{project_gaussian, Splat2D};
pub use raster::{rasterize, rasterize_backward, rasterize_op, rasterize_primitives, RasterAux};
