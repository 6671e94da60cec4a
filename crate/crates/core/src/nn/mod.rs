//! MLP layers, initialization, classification loss and optimizers.

pub mod io;
mod layer;
mod loss;
mod optim;

pub use layer::{BoundLinear, BoundMlp, Linear, Mlp, MlpSpec};
pub use loss::{accuracy, softmax_cross_entropy, softmax_cross_entropy_value};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer, OptimizerKind, OptimizerSpec};
