//! Dense tensor arithmetic with reverse-mode gradient support.
//!
//! Everything is CPU-only, row-major and single-threaded. Values are
//! immutable after construction; the [`Graph`] records a tape of coarse
//! operations during the forward pass and replays it in reverse to
//! accumulate gradients. Computations are generic over [`Scalar`] so the
//! same code runs in 32-bit (training) and 64-bit (gradient checking).

mod error;
mod graph;
mod kernels;
mod scalar;
mod tensor;

pub mod check;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use scalar::Scalar;
pub use tensor::Tensor;
