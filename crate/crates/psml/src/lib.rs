//! Cross-network user alignment via structural-proximity embeddings,
//! improved by implanting pseudo anchors whose positions are fine-tuned with
//! a meta-learned update direction (the PSML framework), plus a Lorentz-model
//! hyperbolic variant and an evaluation/diagnostics harness.
//!
//! # Layout
//!
//! - [`graph`]: graph ingestion, synthetic benchmark generation, anchors,
//!   ablation transforms.
//! - [`embed`]: the shared-embedding trainer with negative sampling.
//! - [`implant`]: pseudo-anchor connection patterns, implantation, and the
//!   embedding-shift decay experiment.
//! - [`meta`]: meta-learning of the direction weights and fine-tuning of
//!   pseudo-anchor embeddings; the PS++/PSML training loops.
//! - [`lorentz`]: hyperboloid geometry kernel and the Riemannian trainer.
//! - [`eval`]: Precision@N, Hit-Precision, PPI, and the density/evenness
//!   diagnostic.
//! - [`config`] / [`pipeline`]: experiment configuration and end-to-end
//!   orchestration behind the `psml` binary.
//!
//! The `examples/` directory holds one runnable example per capability; see
//! the README for the tour.

pub mod config;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod implant;
pub mod lorentz;
pub mod meta;
pub mod pipeline;
pub mod sampling;
pub mod vecmath;

pub use error::{Error, Result};
