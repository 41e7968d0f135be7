//! Reverse-mode differentiation over a dynamically recorded tape.
//!
//! Every primitive in [`ops`](self) records its forward value and a
//! backward closure. Discrete selections (down-sampling indices) are
//! constants of the backward pass.

mod check;
mod ops;
mod tape;
mod tensor;


pub use check::{
    grad_check, op_grad_error, primitive_grad_errors, primitive_registry, relative_error, tape_grad_check, GradCheck,
};
pub use ops::{gelu, gelu_grad};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
