//! Minimal reverse-mode automatic differentiation over dense `f64` tensors,
//! plus the Adam optimizer and a flat checkpoint format.
//!
//! Parameters live outside the tape. A forward pass binds them onto a fresh
//! [`Tape`] (tracked or constant), `backward` returns the gradients of tracked
//! leaves, and callers fold those into [`Parameter`] buffers. Separate tapes
//! can therefore evaluate disjoint mini-batch chunks and be reduced in a fixed
//! order.

mod adam;
mod checkpoint;
mod param;
mod tape;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, restore, save_checkpoint};
pub use param::{fingerprint, Parameter};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;
