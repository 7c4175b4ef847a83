//! A small reverse-mode automatic differentiation library over dense `f64`
//! matrices, sized for desk-scale models where clarity and bit-reproducible
//! behaviour matter more than throughput.
//!
//! The pieces:
//!
//! * [`Tensor`] — row-major 2-D values plus an optional node in a dynamically
//!   recorded computation graph. Scalars are `1x1`, vectors `1xn`.
//! * The operator library (`ops`) — matrix products, masked softmax with
//!   `-inf` sentinels, layer normalization, embedding gathers, slicing and
//!   concatenation, top-k masking, cross entropy, and the usual elementwise
//!   maps. Each records an exact backward rule.
//! * [`ParamStore`] — named parameters with deterministic iteration order.
//! * [`checkpoint`] — a flat archive (little-endian f64 payload plus a JSON
//!   manifest carrying a config hash) for saving and restoring parameters
//!   bit-for-bit.
//! * [`gradcheck`] — central finite differences for verifying any gradient
//!   against an implementation-independent numeric estimate.
//!
//! Determinism: no global state, no threads, no hash-ordered iteration in any
//! numeric path. Given the same inputs and seeds, every forward and backward
//! pass reproduces the same bits.

mod error;
mod ops;
mod param;
mod tensor;

pub mod checkpoint;
pub mod gradcheck;

pub use error::TensorError;
pub use ops::topk_indices;
pub use param::{ParamStore, Parameter};
pub use tensor::Tensor;
