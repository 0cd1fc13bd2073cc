//! Entity-guided summarization over sentence-entity graphs.
//!
//! Documents arrive pre-annotated with entity mention clusters and KG ids.
//! Each becomes a graph of sentence and entity nodes joined by three
//! weighted edge types, encoded by a relational heterogeneous GNN. A
//! multi-task selector scores sentences and entities; an entity-focused
//! pointer-generator rewrites the selection; a self-critical phase tunes
//! the selector against the generator's ROUGE.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the width.

pub mod autodiff;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod generator;
pub mod graph;
pub mod rhgnn;
pub mod rl;
pub mod rouge;
pub mod scalar;
pub mod selector;
pub mod training;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type ParamStore32 = autodiff::ParamStore<f32>;
pub type ParamStore64 = autodiff::ParamStore<f64>;
pub type Model32 = training::Model<f32>;
pub type Model64 = training::Model<f64>;
pub type Checkpoint32 = training::Checkpoint<f32>;
pub type Checkpoint64 = training::Checkpoint<f64>;
