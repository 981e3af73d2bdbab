//! Alignment scores between image features and class text embeddings.
//!
//! Four scorers share one vocabulary:
//!
//! * CLIP: cosine of the global feature against one prompt per class.
//! * CuPL: mean cosine of the global feature against a class's descriptions.
//! * WCA: crop x description cosines, weighted by a softmax over crop-to-global
//!   similarity and a softmax over description-to-prompt similarity.
//! * LAS: crop x anchor cosines over the top-k crops, weighted by CLS-token
//!   similarities normalized by their sum (no softmax).
//!
//! Every function here is pure. Inputs are raw features; normalization
//! happens inside [`cosine_sim`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{argmax, dot, norm, softmax, Matrix};
use crate::EPS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("zero-norm operand: {0}")]
    ZeroNorm(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate crop weights: |sum of CLS similarities| = {sum:e} <= {eps:e}")]
    DegenerateWeights { sum: f64, eps: f64 },
    #[error("k = {k} out of range for {n} crops")]
    KOutOfRange { k: usize, n: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, AlignError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scorer {
    #[serde(rename = "CLIP")]
    Clip,
    #[serde(rename = "CuPL")]
    Cupl,
    #[serde(rename = "WCA")]
    Wca,
    #[serde(rename = "LAS")]
    Las,
}

impl Scorer {
    pub const ALL: [Scorer; 4] = [Scorer::Clip, Scorer::Cupl, Scorer::Wca, Scorer::Las];

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Clip => "CLIP",
            Scorer::Cupl => "CuPL",
            Scorer::Wca => "WCA",
            Scorer::Las => "LAS",
        }
    }
}

/// Per-class alignment scores of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub scorer: Scorer,
}

impl ScoreVector {
    /// Highest and second-highest score. Requires at least two classes.
    pub fn top2(&self) -> (f64, f64) {
        let mut first = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for &v in &self.values {
            if v > first {
                second = first;
                first = v;
            } else if v > second {
                second = v;
            }
        }
        (first, second)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// Softmax over crop-to-global multimodal similarity.
    SoftmaxGlobalSim,
    /// CLS-token similarity divided by its sum over crops.
    ClsSumNormalized,
    /// Fallback when the CLS sum is degenerate.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropWeights {
    pub values: Vec<f64>,
    pub scheme: WeightScheme,
}

impl CropWeights {
    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![1.0 / n as f64; n],
            scheme: WeightScheme::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescWeights {
    pub values: Vec<f64>,
}

/// Top-k crop indices, ordered by descending weight then ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKSelection {
    pub indices: Vec<usize>,
}

impl TopKSelection {
    pub fn k(&self) -> usize {
        self.indices.len()
    }
}

fn checked_norm(v: &[f64], what: impl FnOnce() -> String) -> Result<f64> {
    let n = norm(v);
    if n <= EPS || !n.is_finite() {
        return Err(AlignError::ZeroNorm(what()));
    }
    Ok(n)
}

fn check_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(AlignError::Dimension(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// `u . v / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(u.len(), v.len(), "cosine operands")?;
    let nu = checked_norm(u, || "left operand".into())?;
    let nv = checked_norm(v, || "right operand".into())?;
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Row-by-row cosine matrix: entry `(i, j)` is `cos(rows[i], targets[j])`.
///
/// This is the crop x description matrix for WCA and the crop x anchor
/// matrix for LAS.
pub fn cross_alignment(rows: &Matrix, targets: &Matrix) -> Result<Matrix> {
    check_dim(rows.cols(), targets.cols(), "cross-alignment feature width")?;
    let target_norms = targets
        .iter_rows()
        .enumerate()
        .map(|(j, t)| checked_norm(t, || format!("target row {j}")))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Matrix::zeros(rows.rows(), targets.rows());
    for (i, r) in rows.iter_rows().enumerate() {
        let nr = checked_norm(r, || format!("row {i}"))?;
        for (j, t) in targets.iter_rows().enumerate() {
            out.set(i, j, (dot(r, t) / (nr * target_norms[j])).clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}

/// Cosine of `f` against each class prompt row.
pub fn clip_score(f: &[f64], class_prompts: &Matrix) -> Result<ScoreVector> {
    check_dim(f.len(), class_prompts.cols(), "feature vs prompt width")?;
    checked_norm(f, || "image feature".into())?;
    let values = class_prompts
        .iter_rows()
        .enumerate()
        .map(|(j, row)| {
            checked_norm(row, || format!("prompt of class {j}"))?;
            cosine_sim(f, row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreVector { values, scorer: Scorer::Clip })
}

/// Mean cosine of `f` against a class's description rows.
pub fn cupl_score(f: &[f64], descriptions: &Matrix) -> Result<f64> {
    if descriptions.rows() == 0 {
        return Err(AlignError::Empty("descriptions"));
    }
    let theta = cross_alignment(&Matrix::from_rows(&[f]), descriptions)?;
    Ok(theta.row(0).iter().sum::<f64>() / descriptions.rows() as f64)
}

/// CuPL scores against every class's descriptions.
pub fn cupl_scores<'a, I>(f: &[f64], per_class: I) -> Result<ScoreVector>
where
    I: IntoIterator<Item = &'a Matrix>,
{
    let values = per_class
        .into_iter()
        .map(|desc| cupl_score(f, desc))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreVector { values, scorer: Scorer::Cupl })
}

/// Softmax over crops of their cosine to the global feature.
pub fn wca_crop_weights(f_global: &[f64], crops: &Matrix) -> Result<CropWeights> {
    if crops.rows() == 0 {
        return Err(AlignError::Empty("crops"));
    }
    let sims = cross_alignment(crops, &Matrix::from_rows(&[f_global]))?;
    Ok(CropWeights {
        values: softmax(sims.as_slice()),
        scheme: WeightScheme::SoftmaxGlobalSim,
    })
}

/// Softmax over descriptions of their cosine to the plain class prompt.
pub fn wca_desc_weights(prompt_embedding: &[f64], descriptions: &Matrix) -> Result<DescWeights> {
    if descriptions.rows() == 0 {
        return Err(AlignError::Empty("descriptions"));
    }
    let sims = cross_alignment(descriptions, &Matrix::from_rows(&[prompt_embedding]))?;
    Ok(DescWeights { values: softmax(sims.as_slice()) })
}

/// `sum_i sum_j w_i v_j cos(crop_i, desc_j)`.
pub fn wca_score(crops: &Matrix, descriptions: &Matrix, w: &CropWeights, v: &DescWeights) -> Result<f64> {
    check_dim(w.values.len(), crops.rows(), "crop weights vs crops")?;
    check_dim(v.values.len(), descriptions.rows(), "description weights vs descriptions")?;
    let theta = cross_alignment(crops, descriptions)?;
    let mut total = 0.0;
    for (i, wi) in w.values.iter().enumerate() {
        total += wi * dot(theta.row(i), &v.values);
    }
    Ok(total)
}

/// CLS-token similarity of each crop to the global token, divided by the sum
/// over crops. Weights may be negative; they always sum to one.
///
/// Fails with [`AlignError::DegenerateWeights`] when the sum is within
/// [`EPS`] of zero.
pub fn fair_crop_weights(g_global: &[f64], crop_cls: &Matrix) -> Result<CropWeights> {
    if crop_cls.rows() == 0 {
        return Err(AlignError::Empty("crop CLS tokens"));
    }
    let sims = cross_alignment(crop_cls, &Matrix::from_rows(&[g_global]))?;
    let sum: f64 = sims.as_slice().iter().sum();
    if sum.abs() <= EPS {
        return Err(AlignError::DegenerateWeights { sum: sum.abs(), eps: EPS });
    }
    Ok(CropWeights {
        values: sims.as_slice().iter().map(|s| s / sum).collect(),
        scheme: WeightScheme::ClsSumNormalized,
    })
}

/// Indices of the `k` largest weights. Ties go to the lower index.
pub fn select_topk(w: &CropWeights, k: usize) -> Result<TopKSelection> {
    let n = w.values.len();
    if k == 0 || k > n {
        return Err(AlignError::KOutOfRange { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps ascending index among equal weights
    order.sort_by(|&a, &b| w.values[b].total_cmp(&w.values[a]));
    order.truncate(k);
    Ok(TopKSelection { indices: order })
}

/// Learned alignment score: `psi_j = sum_{i in topk} w_i cos(crop_i, anchor_j)`.
///
/// Weights are used as-is over the selected subset.
pub fn las_score(crops: &Matrix, anchors: &Matrix, w: &CropWeights, sel: &TopKSelection) -> Result<ScoreVector> {
    las_score_with(crops, anchors, w, sel, false)
}

/// [`las_score`] with optional renormalization of the selected weights to
/// sum to one.
pub fn las_score_with(
    crops: &Matrix,
    anchors: &Matrix,
    w: &CropWeights,
    sel: &TopKSelection,
    renormalize: bool,
) -> Result<ScoreVector> {
    check_dim(w.values.len(), crops.rows(), "crop weights vs crops")?;
    if let Some(&bad) = sel.indices.iter().find(|&&i| i >= crops.rows()) {
        return Err(AlignError::Dimension(format!("selected crop {bad} of {}", crops.rows())));
    }
    let selected = crops.select_rows(&sel.indices);
    let theta = cross_alignment(&selected, anchors)?;
    let mut weights: Vec<f64> = sel.indices.iter().map(|&i| w.values[i]).collect();
    if renormalize {
        let total: f64 = weights.iter().sum();
        if total.abs() > EPS {
            weights.iter_mut().for_each(|x| *x /= total);
        }
    }
    let mut values = vec![0.0; anchors.rows()];
    for (r, wi) in weights.iter().enumerate() {
        for (acc, t) in values.iter_mut().zip(theta.row(r)) {
            *acc += wi * t;
        }
    }
    Ok(ScoreVector { values, scorer: Scorer::Las })
}

/// Argmax class; ties go to the lowest index.
///
/// Panics on an empty score vector.
pub fn predict_label(scores: &ScoreVector) -> usize {
    argmax(&scores.values).expect("predict_label on empty scores")
}
