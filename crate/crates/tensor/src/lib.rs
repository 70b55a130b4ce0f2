//! Dense `f32`/`f64` tensors and a reverse-mode differentiation tape.

mod error;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod scalar;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use kernels::{AttentionLayout, GeluApprox, MaskRule, Segment, NO_GROUP};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
