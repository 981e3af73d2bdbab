use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainError;
use crate::exec::Execution;

/// How the average prediction in the fairness term is formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PbarMode {
    /// Mean of the current batch's softmax rows.
    BatchMean,
    /// `momentum * previous + (1 - momentum) * batch mean`, starting uniform.
    Ema { momentum: f64 },
}

/// Similarity between adapted strong features and anchors inside the loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    /// Unnormalized dot product.
    RawDot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Multiplier on similarities before the softmax.
    pub logit_scale: f64,
    /// Crops kept after ranking by weight.
    pub k: usize,
    /// Crops subsampled per image and epoch.
    pub n_use: usize,
    pub pl_weight_on: bool,
    pub las_on: bool,
    /// Pseudo-label from the global feature instead of crops.
    pub fairg_mode: bool,
    pub topk_renormalize: bool,
    pub pbar_mode: PbarMode,
    pub similarity: Similarity,
    pub prenormalize_descriptions: bool,
    pub seed: u64,
    /// Worker policy; does not affect results and is not part of the hash.
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 32,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            logit_scale: 100.0,
            k: 4,
            n_use: 16,
            pl_weight_on: true,
            las_on: true,
            fairg_mode: false,
            topk_renormalize: false,
            pbar_mode: PbarMode::BatchMean,
            similarity: Similarity::Cosine,
            prenormalize_descriptions: false,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    /// Checks bounds that do not depend on a dataset.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return bad(format!("logit_scale must be positive, got {}", self.logit_scale));
        }
        if self.k == 0 || self.k > self.n_use {
            return bad(format!("need 1 <= k <= n_use, got k = {}, n_use = {}", self.k, self.n_use));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) {
            return bad("weight_decay must be >= 0 and adam_eps > 0".into());
        }
        if let PbarMode::Ema { momentum } = self.pbar_mode {
            if !(0.0..1.0).contains(&momentum) {
                return bad(format!("EMA momentum must lie in [0, 1), got {momentum}"));
            }
        }
        Ok(())
    }

    /// Checks bounds against a dataset's crop count.
    pub fn validate_for(&self, crops_per_image: usize) -> Result<(), TrainError> {
        self.validate()?;
        if self.n_use > crops_per_image {
            return Err(TrainError::Config(format!(
                "n_use = {} exceeds the dataset's {} crops per image",
                self.n_use, crops_per_image
            )));
        }
        Ok(())
    }

    /// Short hex digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}
