//! Dense tensors and a small reverse-mode differentiation engine.

mod graph;
mod gradcheck;
pub mod kernels;
mod tensor;

pub use gradcheck::{central_difference, grad_check, relative_error, DEFAULT_STEP};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::Tensor;
