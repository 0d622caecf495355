//! Evaluation metrics for completion and segmentation quality.
//!
//! Distances are in the clouds' own units (millimetres in the pipeline), so
//! Chamfer values are mm². EMD is computed on whatever coordinates it is
//! given; the evaluation harness rescales by the ground-truth bounding-box
//! diagonal first (see [`report`]).

mod chamfer;
mod emd;
mod iou;
pub mod report;
mod snr;
mod stats;

pub use chamfer::{
    chamfer, chamfer_split, default_visibility_threshold, fscore, fscore_threshold,
    nearest_dist_sq, ChamferResult, SplitChamferResult,
};
pub use emd::{
    emd_approx, emd_exact, emd_exact_with_cap, solve_assignment, EmdResult, DEFAULT_EXACT_CAP,
};
pub use iou::{seg_metrics, seg_metrics_labels, voxel_iou, SegMetrics};
pub use report::{MetricsReport, MetricsRow};
pub use snr::{snr, snr_with, NoisePairing, SnrResult};
pub use stats::{mean, median, pearson};
