//! Hierarchical contextual attention GRU (HCA-GRU) for sequential recommendation.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense vectors/matrices, activations, softmax, the seeded RNG and a
//!   central-difference gradient checker.
//! - [`seqmodel`]: the forward pass. A GRU whose gates also see an attention-weighted
//!   summary of the last `w_x` inputs, followed by attention over the last `w_h` hidden
//!   states and a `tanh` fusion into the user's overall interest.
//! - [`training`]: BPR triples, hand-derived backpropagation through time and SGD.
//! - [`baselines`]: Random, POP, BPR-MF and a plain GRU sharing the cell code.
//! - [`corpus`]: event-log ingestion, the 80/20 split and synthetic generators.
//! - [`metrics`]: top-k ranking and Recall/MAP/NDCG/AUC.
//! - [`parallel`]: per-user fan-out, backed by rayon when the `parallel` feature is on.

pub mod baselines;
pub mod corpus;
mod error;
pub mod metrics;
pub mod numerics;
pub mod parallel;
pub mod seqmodel;
pub mod training;

pub use error::{Error, Result};
