//! Dense matrices and a reverse-mode tape over them.

mod graph;
mod matrix;

pub use graph::{sigmoid, softplus, Gradients, Graph, Var};
pub use matrix::{Matrix, Real};
