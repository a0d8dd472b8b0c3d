//! Reverse-mode differentiable dense arrays.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, Var, COSINE_FLOOR};
pub use tensor::DenseArray;
