//! Dense `f64` tensors with reverse-mode automatic differentiation.

pub mod check;
pub mod graph;
pub mod params;
pub mod rng;
pub mod tensor;

pub use check::{grad_check, relative_error, GradCheckReport};
pub use graph::{gelu_scalar, sigmoid_scalar, Graph, NodeId};
pub use params::{GradBuffer, ParamId, ParamStore, Session, Trainable};
pub use rng::{Rng, RngState};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
