//! Minimal dense network core: fully connected layers, manual backprop,
//! first-order optimizers and a finite-difference gradient checker.

mod activation;
mod gradcheck;
mod mlp;
mod optim;

pub use activation::Activation;
pub use gradcheck::{check_gradients, finite_diff_check, max_relative_error, relative_error, GradCheck};
pub use mlp::{global_norm, Gradients, LayerShape, MlpModel};
pub use optim::{Optimizer, OptimizerKind};
