//! Self-training of the anchors and adapter from crop-based pseudo-labels.
//!
//! Each step labels a batch with the learned alignment score (no gradient),
//! weights every label by its top-2 score margin, and fits a strongly
//! augmented view of the same image to that label. A fairness term keeps the
//! batch's average prediction close to uniform.

mod config;
mod loss;
mod optim;
mod pseudo;
mod trainer;

pub use config::{PbarMode, Similarity, TrainConfig};
pub use loss::{compute_gradients, compute_loss, fairness_loss, loss_and_gradients, Gradients, LossOutput};
pub use optim::{cosine_lr, AdamW};
pub use pseudo::{adaptive_weight, crop_subsample, pseudo_label_batch, PseudoLabelBatch};
pub use trainer::{train, train_from, EpochLog, TrainOutcome};

use thiserror::Error;

use crate::align::AlignError;
use crate::cda::{Adapter, Cda, CdaError};
use crate::eval::EvalError;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("non-finite loss at epoch {epoch}, step {step} (L_st = {l_st}, L_reg = {l_reg})")]
    NonFiniteLoss { epoch: u64, step: u64, l_st: f64, l_reg: f64 },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Cda(#[from] CdaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Everything the trainer mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub cda: Cda,
    pub adapter: Adapter,
    /// Snapshot of the initial anchors, used when the learned score is off.
    pub frozen_anchors: Matrix,
    /// Latest average prediction (EMA state in EMA mode).
    pub pbar: Vec<f64>,
    pub step: u64,
}

impl TrainerState {
    pub fn new(cda: Cda, adapter: Adapter) -> Self {
        let c = cda.num_classes();
        Self {
            frozen_anchors: cda.anchors.clone(),
            cda,
            adapter,
            pbar: vec![1.0 / c as f64; c],
            step: 0,
        }
    }
}
