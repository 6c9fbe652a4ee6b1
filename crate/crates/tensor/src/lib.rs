//! Dense rank-4 `f64` tensors and a reverse-mode gradient tape covering the
//! operations of a two-stage alignment + pan-sharpening network.

pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use ops::{Padding, ShiftMinMode};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{clamp_index, Shape, Tensor};
