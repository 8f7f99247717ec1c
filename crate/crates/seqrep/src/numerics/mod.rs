//! Minimal dense-tensor math with reverse-mode differentiation.
//!
//! Everything downstream trains through this module: [`Tensor`] holds values,
//! [`Tape`] records forward primitives and replays them backward, and
//! [`Optimizer`] applies adaptive-moment updates. All arithmetic is 64-bit;
//! any op producing a NaN or infinity is an error, not a silent state.

mod checkpoint;
pub mod gradcheck;
pub mod linalg;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use optim::Optimizer;
pub use tape::{sigmoid, Gradients, NodeId, Tape};
pub use tensor::Tensor;
