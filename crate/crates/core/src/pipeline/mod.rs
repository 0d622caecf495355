//! End-to-end orchestration: ground-truth labels from posed meshes,
//! per-vertebra extraction, dataset assembly, leave-one-specimen-out folds,
//! experiment execution and correlation analysis.

pub mod correlation;
pub mod dataset;
pub mod experiment;
pub mod extract;
pub mod folds;
pub mod labels;
pub mod synth;

pub use correlation::{correlation_matrix, default_variables, CorrelationMatrix};
pub use dataset::{build_dataset, Dataset, FrameRecord, Manifest, MeshRecord, SampleRecord, SkipRecord};
pub use experiment::{evaluate_prediction, evaluate_samples, run_crossval, run_fold, Completer, FoldOutcome};
pub use extract::{extract_vertebra, levels_present};
pub use folds::{make_folds, FoldSpec};
pub use labels::{generate_gt_labels, labels_from_mask};
