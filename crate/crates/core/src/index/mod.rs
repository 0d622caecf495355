//! Spatial indexing and the downsamplers used along the pipeline.

mod kdtree;
mod sampling;

pub use kdtree::{knn_graph, Neighbor, SpatialIndex};
pub use sampling::{
    fps, fps_from, fps_indices, occupancy, random_downsample, voxel_downsample, GridSpec, VoxelGrid,
};
