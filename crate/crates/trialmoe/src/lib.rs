//! Multimodal mixture-of-experts pipeline for clinical-trial outcome
//! prediction.
//!
//! The pipeline unifies every trial field into text (optionally via a
//! language-model description stage), encodes each modality with its own
//! transformer, refines the per-modality representations with a shared
//! sparse mixture of experts, fuses them with disease-conditioned weights,
//! and trains the whole stack end to end with a classification loss, a
//! perturbation-consistency loss, and per-modality auxiliary losses.
//!
//! Determinism contract: given the same inputs, configuration, and master
//! seed, every stage — description, tokenization, initialization, batching,
//! gating noise, perturbation, dropout, and optimization — reproduces its
//! outputs bit for bit.

pub mod augment;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod smoe;
pub mod tokenize;
pub mod train;

pub use error::Error;
