//! Dense tensors, a reverse-mode tape, gradient checking and the checkpoint container.

mod container;
mod gradcheck;
mod tape;
mod tensor;

pub use container::NamedTensors;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, TensorCheck};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
