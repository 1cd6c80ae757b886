//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! Tensors are channels-last (`H×W×C`, `T×H×W×C`) row-major arrays. Each
//! operation on tracked inputs records a graph node; [`Tensor::backward`]
//! propagates gradients from a scalar loss into the leaf parameters, which
//! [`Adam`] then updates.

pub mod checkpoint;
pub mod error;
mod gemm;
pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
mod tensor;

pub use error::{Result, TensorError};
pub use gemm::{with_mac_tally, MacTally};
pub use ops::conv::conv_output_extent;
pub use ops::elementwise::sigmoid_scalar;
pub use optim::{Adam, AdamConfig};
pub use params::{NoGradGuard, ParamStore, Parameter};
pub use rng::{seeded, SeededRng};
pub use tensor::Tensor;
