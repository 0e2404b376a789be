//! Reverse-mode differentiation over dense matrices, plus Adam.

mod graph;
mod optim;

pub use graph::{lower_cholesky, sq_dist, Gradients, Graph, Mat, Var};
pub use optim::{max_relative_error, numeric_gradient, Adam, Bound, ParamId, ParamStore};
