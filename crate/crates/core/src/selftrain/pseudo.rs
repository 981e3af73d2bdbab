//! Pseudo-labels from the learned alignment score.

use rand::seq::index::sample;

use super::{TrainConfig, TrainError, TrainerState};
use crate::align::{
    cross_alignment, fair_crop_weights, las_score_with, predict_label, select_topk, AlignError, CropWeights,
    ScoreVector, Scorer, TopKSelection,
};
use crate::embdata::ImageRecord;
use crate::exec::try_map_indexed;
use crate::linalg::Matrix;
use crate::seed::stream;

/// Pseudo-labels and confidence weights for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelBatch {
    pub labels: Vec<usize>,
    pub gamma: Vec<f64>,
    pub top1: Vec<f64>,
    pub top2: Vec<f64>,
    /// Per-image top-k, as indices into the subsampled crop set.
    pub selections: Vec<TopKSelection>,
    /// Subsampled crop indices into the image's full crop list.
    pub crop_subsets: Vec<Vec<usize>>,
    /// Alignment scores the labels were taken from.
    pub scores: Vec<Vec<f64>>,
    /// Images whose CLS weights were degenerate and fell back to uniform.
    pub degenerate: Vec<bool>,
}

impl PseudoLabelBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

/// `n_use` distinct crop indices out of `n_total`, ascending, drawn from the
/// stream keyed by `key`.
pub fn crop_subsample(n_total: usize, n_use: usize, key: u64) -> Vec<usize> {
    let mut rng = stream(key, &[]);
    let mut idx = sample(&mut rng, n_total, n_use).into_vec();
    idx.sort_unstable();
    idx
}

/// Confidence weight from the top-2 scores: `|s1| * (s1 - s2)`.
///
/// The magnitude keeps the weight non-negative when every score is negative.
pub fn adaptive_weight(s1: f64, s2: f64) -> f64 {
    s1.abs() * (s1 - s2)
}

struct ImageLabel {
    label: usize,
    top1: f64,
    top2: f64,
    selection: TopKSelection,
    subset: Vec<usize>,
    scores: Vec<f64>,
    degenerate: bool,
}

fn label_one(state: &TrainerState, image: &ImageRecord, key: u64, cfg: &TrainConfig) -> Result<ImageLabel, AlignError> {
    let anchors = if cfg.las_on { &state.cda.anchors } else { &state.frozen_anchors };

    let (scores, selection, subset, degenerate) = if cfg.fairg_mode {
        let f = Matrix::from_rows(&[state.adapter.apply(&image.f_global)]);
        let theta = cross_alignment(&f, anchors)?;
        let scores = ScoreVector { values: theta.row(0).to_vec(), scorer: Scorer::Clip };
        (scores, TopKSelection { indices: Vec::new() }, Vec::new(), false)
    } else {
        let subset = crop_subsample(image.crops.rows(), cfg.n_use, key);
        let crop_cls = image.crop_cls.select_rows(&subset);
        // CLS tokens stay in the frozen encoder's space
        let (weights, degenerate) = match fair_crop_weights(&image.g_global, &crop_cls) {
            Ok(w) => (w, false),
            Err(AlignError::DegenerateWeights { .. }) => (CropWeights::uniform(subset.len()), true),
            Err(e) => return Err(e),
        };
        let selection = select_topk(&weights, cfg.k)?;
        let crops = state.adapter.apply_rows(&image.crops.select_rows(&subset));
        let scores = las_score_with(&crops, anchors, &weights, &selection, cfg.topk_renormalize)?;
        (scores, selection, subset, degenerate)
    };

    let label = predict_label(&scores);
    let (top1, top2) = scores.top2();
    Ok(ImageLabel {
        label,
        top1,
        top2,
        selection,
        subset,
        scores: scores.values,
        degenerate,
    })
}

/// Labels a batch without touching trainable state.
///
/// `crop_keys[b]` seeds the crop subsample of `images[b]`.
pub fn pseudo_label_batch(
    state: &TrainerState,
    images: &[&ImageRecord],
    crop_keys: &[u64],
    cfg: &TrainConfig,
) -> Result<PseudoLabelBatch, TrainError> {
    if images.len() != crop_keys.len() {
        return Err(TrainError::Shape(format!("{} images but {} crop keys", images.len(), crop_keys.len())));
    }
    if !cfg.fairg_mode {
        if let Some(im) = images.iter().find(|im| im.crops.rows() < cfg.n_use) {
            return Err(TrainError::Config(format!(
                "n_use = {} exceeds an image's {} crops",
                cfg.n_use,
                im.crops.rows()
            )));
        }
    }
    let per_image = try_map_indexed(cfg.execution, images.len(), |b| label_one(state, images[b], crop_keys[b], cfg))?;

    let mut out = PseudoLabelBatch {
        labels: Vec::with_capacity(images.len()),
        gamma: Vec::with_capacity(images.len()),
        top1: Vec::with_capacity(images.len()),
        top2: Vec::with_capacity(images.len()),
        selections: Vec::with_capacity(images.len()),
        crop_subsets: Vec::with_capacity(images.len()),
        scores: Vec::with_capacity(images.len()),
        degenerate: Vec::with_capacity(images.len()),
    };
    for r in per_image {
        out.labels.push(r.label);
        out.gamma.push(if cfg.pl_weight_on { adaptive_weight(r.top1, r.top2) } else { 1.0 });
        out.top1.push(r.top1);
        out.top2.push(r.top2);
        out.selections.push(r.selection);
        out.crop_subsets.push(r.subset);
        out.scores.push(r.scores);
        out.degenerate.push(r.degenerate);
    }
    Ok(out)
}
