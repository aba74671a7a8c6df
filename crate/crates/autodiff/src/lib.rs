//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records operations in creation order; [`Graph::backward`]
//! replays them in reverse. Graphs are cheap and meant to be rebuilt for
//! every batch.

mod backward;
pub mod cases;
mod check;
mod error;
mod graph;
mod tensor;

pub use check::check_gradients;
pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
