//! Entity-focused pointer-generator with coverage.
//!
//! At step `t` the decoder mixes a vocabulary distribution with a copy
//! distribution over source positions:
//!
//! ```text
//! p(w) = p_gen · p_vocab(w) + (1 − p_gen) · Σ_{i: w_i = w} a_{t,i}
//! ```
//!
//! where both the attention `a_t` and the gate `p_gen` are conditioned on
//! the mean encoding of the salient entities.

mod decode;
mod input;
mod model;

pub use decode::{DecodeMode, Generated};
pub use input::GeneratorInput;
pub use model::{Attention, DecoderStep, EncodedInput, GeneratorDims, GeneratorLoss, GeneratorModel, PgenGate};
