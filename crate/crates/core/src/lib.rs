//! Vertebra shape completion from RGB-D point clouds.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! - [`geometry`]: pinhole camera, rigid transforms, depth unprojection, z-buffer
//!   mask rendering and mesh surface sampling.
//! - [`index`]: kd-tree nearest-neighbour search and the downsamplers.
//! - [`metrics`]: Chamfer family, F-score, EMD, SNR, IoU variants, segmentation
//!   scores, Pearson correlation and report aggregation.
//! - [`nn`]: a small reverse-mode autodiff tape and the geometry-aware
//!   transformer completion network built on it.
//! - [`pipeline`]: ground-truth generation, dataset assembly, leave-one-specimen-out
//!   folds and experiment execution.
//! - [`io`]: PLY, PNG and JSON codecs.
//! - [`cli`]: the `spinecomp` command-line surface.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod index;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
pub use geometry::{
    BinaryMask, BoundingBox2D, CameraIntrinsics, ColorImage, DepthImage, PointCloud,
    RigidTransform, TriangleMesh,
};
