//! Neural ODE training with fixed-step solvers, and diagnostics that tell whether a
//! trained model behaves like a continuous flow or is locked to its training solver.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common `f64` and `f32` instantiations.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaption;
pub mod autodiff;
pub mod datasets;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod nn;
pub mod odesolve;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type NeuralOdeModel = model::NeuralOdeModel<f64>;
pub type LabeledDataset = datasets::LabeledDataset<f64>;
pub type Trajectory = odesolve::Trajectory<f64>;

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Mlp32 = nn::Mlp<f32>;
pub type NeuralOdeModel32 = model::NeuralOdeModel<f32>;
pub type LabeledDataset32 = datasets::LabeledDataset<f32>;
pub type Trajectory32 = odesolve::Trajectory<f32>;
