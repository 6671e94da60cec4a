//! Tape-based reverse-mode differentiation over dense 2-D arrays.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, GradCheck};
pub use tape::{Gradients, NodeId, Op, Tape};
pub use tensor::Tensor;
