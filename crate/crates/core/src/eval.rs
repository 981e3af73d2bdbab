//! Accuracy metrics and side-by-side zero-shot scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{
    clip_score, cross_alignment, cupl_scores, fair_crop_weights, las_score, predict_label, select_topk,
    wca_crop_weights, wca_desc_weights, wca_score, AlignError, CropWeights, DescWeights, ScoreVector, Scorer,
};
use crate::cda::{Adapter, Cda};
use crate::embdata::EmbeddingDataset;
use crate::exec::{try_map_indexed, Execution};
use crate::linalg::{argmax, Matrix};
use crate::selftrain::{crop_subsample, PseudoLabelBatch};
use crate::seed::{derive, TAG_ZEROSHOT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dataset has no labels for image {0}")]
    MissingLabels(usize),
    #[error("length mismatch: {predicted} predictions vs {truth} labels")]
    Length { predicted: usize, truth: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// Classification metrics; fractions are in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub top1: f64,
    /// `None` for classes without support.
    pub per_class: Vec<Option<f64>>,
    /// Mean of the defined per-class accuracies.
    pub macro_accuracy: Option<f64>,
    /// Rows are ground truth, columns are predictions.
    pub confusion: Vec<Vec<u64>>,
    pub support: Vec<u64>,
}

impl Metrics {
    pub fn from_predictions(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<Self, EvalError> {
        if predicted.len() != truth.len() {
            return Err(EvalError::Length { predicted: predicted.len(), truth: truth.len() });
        }
        if predicted.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&p, &t) in predicted.iter().zip(truth) {
            if p >= num_classes || t >= num_classes {
                return Err(EvalError::Dimension(format!("class index {} >= {num_classes}", p.max(t))));
            }
            confusion[t][p] += 1;
        }
        let support: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let per_class: Vec<Option<f64>> = (0..num_classes)
            .map(|j| (support[j] > 0).then(|| confusion[j][j] as f64 / support[j] as f64))
            .collect();
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        let macro_accuracy = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let correct: u64 = (0..num_classes).map(|j| confusion[j][j]).sum();
        Ok(Self {
            top1: correct as f64 / support.iter().sum::<u64>() as f64,
            per_class,
            macro_accuracy,
            confusion,
            support,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Dense confusion grid with a header row of predicted class names and a
    /// leading column of true class names.
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("truth\\pred");
        for name in class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.confusion) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn labels_of(ds: &EmbeddingDataset) -> Result<Vec<usize>, EvalError> {
    ds.images
        .iter()
        .enumerate()
        .map(|(i, im)| im.label.ok_or(EvalError::MissingLabels(i)))
        .collect()
}

/// Cosine of each adapted global feature against the anchors.
pub fn predict_global(
    ds: &EmbeddingDataset,
    cda: &Cda,
    adapter: &Adapter,
    exec: Execution,
) -> Result<Vec<usize>, EvalError> {
    if cda.dim() != ds.header.d || adapter.dim() != ds.header.d {
        return Err(EvalError::Dimension(format!(
            "dataset d = {}, anchors d = {}, adapter d = {}",
            ds.header.d,
            cda.dim(),
            adapter.dim()
        )));
    }
    let preds = try_map_indexed(exec, ds.images.len(), |i| {
        let f = Matrix::from_rows(&[adapter.apply(&ds.images[i].f_global)]);
        let theta = cross_alignment(&f, &cda.anchors)?;
        Ok::<_, AlignError>(argmax(theta.row(0)).expect("at least one class"))
    })?;
    Ok(preds)
}

pub fn evaluate(ds: &EmbeddingDataset, cda: &Cda, adapter: &Adapter, exec: Execution) -> Result<Metrics, EvalError> {
    let truth = labels_of(ds)?;
    let preds = predict_global(ds, cda, adapter, exec)?;
    Metrics::from_predictions(&preds, &truth, cda.num_classes())
}

/// Fraction of pseudo-labels matching `truth`, taken in batch order.
pub fn pseudo_label_accuracy<'a, I>(batches: I, truth: &[usize]) -> Result<f64, EvalError>
where
    I: IntoIterator<Item = &'a PseudoLabelBatch>,
{
    let predicted: Vec<usize> = batches.into_iter().flat_map(|b| b.labels.iter().copied()).collect();
    if predicted.len() != truth.len() {
        return Err(EvalError::Length { predicted: predicted.len(), truth: truth.len() });
    }
    if predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Metrics per zero-shot scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerTable {
    pub k: usize,
    pub n_use: usize,
    pub seed: u64,
    pub scorers: BTreeMap<Scorer, Metrics>,
}

impl ScorerTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// `scorer,top1,macro_accuracy` rows; accuracies in percent.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("scorer,top1,macro_accuracy\n");
        for (scorer, m) in &self.scorers {
            let macro_acc = m.macro_accuracy.map_or(String::new(), |v| format!("{:.4}", 100.0 * v));
            let _ = writeln!(out, "{},{:.4},{}", scorer.name(), 100.0 * m.top1, macro_acc);
        }
        out
    }
}

/// Per-image scores of every zero-shot scorer.
///
/// Crops are subsampled per image from the stream keyed by `seed`; WCA and
/// LAS see the same subset.
pub fn zero_shot_scores(
    ds: &EmbeddingDataset,
    cda: &Cda,
    k: usize,
    n_use: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<[ScoreVector; 4]>, EvalError> {
    let prompts = ds.prompt_matrix();
    let desc_weights: Vec<DescWeights> = ds
        .classes
        .iter()
        .map(|c| wca_desc_weights(&c.prompt_embedding, &c.descriptions))
        .collect::<Result<_, _>>()?;
    let scores = try_map_indexed(exec, ds.images.len(), |i| {
        let im = &ds.images[i];
        let subset = crop_subsample(im.crops.rows(), n_use, derive(seed, &[TAG_ZEROSHOT, i as u64]));
        let crops = im.crops.select_rows(&subset);

        let clip = clip_score(&im.f_global, &prompts)?;
        let cupl = cupl_scores(&im.f_global, ds.classes.iter().map(|c| &c.descriptions))?;

        let w = wca_crop_weights(&im.f_global, &crops)?;
        let wca = ds
            .classes
            .iter()
            .zip(&desc_weights)
            .map(|(c, v)| wca_score(&crops, &c.descriptions, &w, v))
            .collect::<Result<Vec<_>, _>>()?;

        let fw = match fair_crop_weights(&im.g_global, &im.crop_cls.select_rows(&subset)) {
            Err(AlignError::DegenerateWeights { .. }) => CropWeights::uniform(subset.len()),
            other => other?,
        };
        let las = las_score(&crops, &cda.anchors, &fw, &select_topk(&fw, k)?)?;
        Ok::<_, AlignError>([clip, cupl, ScoreVector { values: wca, scorer: Scorer::Wca }, las])
    })?;
    Ok(scores)
}

pub fn compare_scorers(
    ds: &EmbeddingDataset,
    cda: &Cda,
    k: usize,
    n_use: usize,
    seed: u64,
    exec: Execution,
) -> Result<ScorerTable, EvalError> {
    let truth = labels_of(ds)?;
    if n_use == 0 || n_use > ds.header.crops_per_image {
        return Err(EvalError::Dimension(format!(
            "n_use = {n_use} out of range for {} crops",
            ds.header.crops_per_image
        )));
    }
    let scores = zero_shot_scores(ds, cda, k, n_use, seed, exec)?;
    let c = ds.num_classes();
    let mut scorers = BTreeMap::new();
    for (slot, scorer) in Scorer::ALL.iter().enumerate() {
        let preds: Vec<usize> = scores.iter().map(|s| predict_label(&s[slot])).collect();
        scorers.insert(*scorer, Metrics::from_predictions(&preds, &truth, c)?);
    }
    Ok(ScorerTable { k, n_use, seed, scorers })
}
