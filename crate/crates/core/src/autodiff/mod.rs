//! Dense matrices with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass; calling
//! [`Tape::backward`] on a scalar loss walks the record in reverse and
//! returns [`Gradients`]. Trainable tensors live in a [`ParamStore`] and
//! enter a tape through [`Tape::param`], which borrows instead of copying.

mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{Adam, AdamConfig};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{Axis, Gradients, Tape, Var};
pub use tensor::Tensor;
