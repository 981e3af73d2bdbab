//! Unsupervised adaptation of vision-language classifiers over precomputed
//! embeddings.
//!
//! The crate scores images against class text embeddings (CLIP, CuPL, WCA and
//! a learned crop-based score), pseudo-labels unlabeled images with the
//! learned score, and self-trains a set of class anchors plus a per-dimension
//! affine adapter on the image features.
//!
//! Modules, bottom-up:
//!
//! * [`embdata`]: dataset model, binary format, validation, synthetic data.
//! * [`align`]: stateless alignment scores and crop weighting.
//! * [`cda`]: anchors, adapter, checkpoints.
//! * [`selftrain`]: pseudo-labeling, loss and gradients, the training loop.
//! * [`eval`]: metrics and zero-shot scorer comparison.
//!
//! Batch work fans out through [`exec`]; results never depend on the number
//! of workers.

pub mod align;
pub mod cda;
pub mod embdata;
pub mod eval;
pub mod exec;
pub mod fixture;
pub mod linalg;
pub mod seed;
pub mod selftrain;

/// Guard for zero norms and degenerate weight denominators.
pub const EPS: f64 = 1e-6;

pub use exec::Execution;
pub use linalg::Matrix;
