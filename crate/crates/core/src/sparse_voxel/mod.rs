//! Lidar/image voxelization and neighbor retrieval over occupied voxels.

pub mod grid;
pub mod knn;
pub mod points;
pub mod voxels;

pub use grid::VoxelGridSpec;
pub use knn::{knn_brute_force, knn_nonzero, KnnIndex, Neighbor};
pub use points::{range_filter, Aabb, LidarPoint, PointCloud};
pub use voxels::{nonzero_queries, unproject_image_features, voxelize, DepthMap, Modality, QuerySet, SparseVoxelTensor};
