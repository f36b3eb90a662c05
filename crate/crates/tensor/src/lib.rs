//! Dense tensors, a closed set of feature-map operators, tape-based reverse-mode
//! differentiation, the Adam optimizer and the `GLAT1` tensor file format.

pub mod error;
pub mod glat;
pub mod graph;
pub mod kernels;
pub mod optim;
pub mod real;
pub mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use kernels::{BatchNormMode, RunningStats};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use real::Real;
pub use tensor::Tensor;
