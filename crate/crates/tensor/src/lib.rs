//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Tensors are immutable row-major `f64` arrays. Operations on tensors that
//! descend from a traced leaf record themselves into a graph of [`tape::Node`]s;
//! [`tape::backward`] replays that graph in reverse to produce [`tape::Gradients`]
//! for every trainable leaf. The graph is rebuilt on every forward pass.
//!
//! Everything is single-threaded and deterministic: the same inputs and seed
//! produce bit-identical outputs, including gradient accumulation order.

mod broadcast;
mod conv;
mod error;
mod gradcheck;
mod matmul;
mod norm;
mod ops;
mod reduce;
mod shape;
mod tensor;

pub mod adam;
pub mod io;
pub mod nn;
pub mod rng;
pub mod tape;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{backward, no_grad, Gradients};
pub use tensor::Tensor;
