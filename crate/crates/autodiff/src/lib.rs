//! Minimal dense-tensor arithmetic with reverse-mode differentiation.
//!
//! Everything is `f64` and rank-2 (plus vectors for biases). A [`Tape`]
//! records ops as they run; [`Tape::backward`] walks it in reverse.
//! [`grad_check`] compares tape gradients with central differences, and
//! [`Checkpoint`] stores named tensors on disk.

pub mod checkpoint;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use gradcheck::{grad_check, relative_error, GradCheckError, GradCheckReport, DEFAULT_STEP};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{kernels, ShapeError, Tensor};
