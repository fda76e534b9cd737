//! Dense `f64` tensors with a reverse-mode autodiff tape.
//!
//! Everything is sized for small recurrent/attention models: rank-2 tensors
//! only (vectors are `[1, n]`), no broadcasting beyond row-vector bias and
//! gain terms, and a single-threaded tape per forward pass.

mod error;
pub mod gradcheck;
pub mod layers;
mod params;
mod tape;
mod tensor;

pub use error::NnError;
pub use params::{AdamConfig, Group, ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, NnError>;
