//! Minimal reverse-mode differentiation and the point completion network.
//!
//! All arithmetic is `f64`, so the same code paths serve training and
//! finite-difference gradient checks.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod train;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use loss::cd_loss;
pub use model::{CompletionModel, ForwardOutput, ModelConfig, Normalization};
pub use optim::{adamw_step, AdamState, AdamWConfig};
pub use params::ParamStore;
pub use tensor::Tensor;
pub use train::{evaluate_cd, prepare_input, train, EpochStats, LossCurve, TrainConfig, TrainingPair};
