//! Weighted self-training loss with the fairness term, and its analytic
//! gradients with respect to the anchors and the adapter.
//!
//! For strong feature `x_b`, adapted feature `u_b = scale * x_b + shift`:
//!
//! ```text
//! p_b     = softmax_j(s * sim(u_b, Z_j))
//! L_st    = 1/B sum_b gamma_b * -log p_b[y_b]
//! pbar    = alpha * mean_b p_b + (1 - alpha) * pbar_prev
//! L_reg   = -1/c sum_j log pbar_j
//! ```
//!
//! `alpha = 1` for batch-mean mode and `1 - momentum` for EMA mode. Labels and
//! gammas are constants (no gradient flows into the pseudo-labeler).

use super::{PbarMode, PseudoLabelBatch, Similarity, TrainConfig, TrainError, TrainerState};
use crate::align::AlignError;
use crate::exec::{map_indexed, try_map_indexed};
use crate::linalg::{dot, norm, softmax, Matrix};
use crate::EPS;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub l_st: f64,
    pub l_reg: f64,
    pub total: f64,
    /// `B x c` softmax outputs.
    pub probs: Matrix,
    pub pbar_used: Vec<f64>,
}

/// Gradients of the total loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub anchors: Matrix,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

/// `-1/c sum_j log pbar_j`; equals `ln c` at the uniform distribution.
pub fn fairness_loss(pbar: &[f64]) -> f64 {
    -pbar.iter().map(|p| p.ln()).sum::<f64>() / pbar.len() as f64
}

struct SampleForward {
    u: Vec<f64>,
    u_norm: f64,
    sims: Vec<f64>,
    probs: Vec<f64>,
    nll: f64,
}

struct Forward {
    samples: Vec<SampleForward>,
    anchor_norms: Vec<f64>,
    pbar: Vec<f64>,
    alpha: f64,
    l_st: f64,
    l_reg: f64,
}

fn forward(
    state: &TrainerState,
    plb: &PseudoLabelBatch,
    strong: &Matrix,
    cfg: &TrainConfig,
) -> Result<Forward, TrainError> {
    let batch = plb.len();
    let anchors = &state.cda.anchors;
    let c = anchors.rows();
    if batch == 0 {
        return Err(TrainError::Shape("empty batch".into()));
    }
    if strong.rows() != batch || strong.cols() != anchors.cols() || state.adapter.dim() != anchors.cols() {
        return Err(TrainError::Shape(format!(
            "strong features {}x{}, batch {batch}, anchors {}x{}, adapter {}",
            strong.rows(),
            strong.cols(),
            c,
            anchors.cols(),
            state.adapter.dim()
        )));
    }
    if let Some(&bad) = plb.labels.iter().find(|&&y| y >= c) {
        return Err(TrainError::Shape(format!("pseudo-label {bad} out of range for {c} classes")));
    }

    let anchor_norms: Vec<f64> = anchors.iter_rows().map(norm).collect();
    if cfg.similarity == Similarity::Cosine {
        if let Some(j) = anchor_norms.iter().position(|&n| n <= EPS) {
            return Err(AlignError::ZeroNorm(format!("anchor of class {j}")).into());
        }
    }

    let samples = try_map_indexed(cfg.execution, batch, |b| {
        let u = state.adapter.apply(strong.row(b));
        let u_norm = norm(&u);
        let sims: Vec<f64> = match cfg.similarity {
            Similarity::Cosine => {
                if u_norm <= EPS {
                    return Err(AlignError::ZeroNorm(format!("adapted strong feature {b}")));
                }
                anchors
                    .iter_rows()
                    .zip(&anchor_norms)
                    .map(|(z, nz)| dot(&u, z) / (u_norm * nz))
                    .collect()
            }
            Similarity::RawDot => anchors.iter_rows().map(|z| dot(&u, z)).collect(),
        };
        let logits: Vec<f64> = sims.iter().map(|s| cfg.logit_scale * s).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let nll = lse - logits[plb.labels[b]];
        Ok(SampleForward { probs: softmax(&logits), u, u_norm, sims, nll })
    })?;

    let l_st = samples
        .iter()
        .zip(&plb.gamma)
        .map(|(s, g)| g * s.nll)
        .sum::<f64>()
        / batch as f64;

    let mut mean = vec![0.0; c];
    for s in &samples {
        mean.iter_mut().zip(&s.probs).for_each(|(m, p)| *m += p);
    }
    mean.iter_mut().for_each(|m| *m /= batch as f64);
    let (pbar, alpha) = match cfg.pbar_mode {
        PbarMode::BatchMean => (mean, 1.0),
        PbarMode::Ema { momentum } => {
            let prev = &state.pbar;
            let p: Vec<f64> = prev.iter().zip(&mean).map(|(q, m)| momentum * q + (1.0 - momentum) * m).collect();
            (p, 1.0 - momentum)
        }
    };
    if let Some(j) = pbar.iter().position(|&p| !(p > 0.0)) {
        return Err(TrainError::Numeric(format!("average prediction for class {j} is {}", pbar[j])));
    }
    let l_reg = fairness_loss(&pbar);

    Ok(Forward { samples, anchor_norms, pbar, alpha, l_st, l_reg })
}

fn output(fwd: Forward, c: usize) -> LossOutput {
    let mut probs = Matrix::zeros(fwd.samples.len(), c);
    for (b, s) in fwd.samples.iter().enumerate() {
        probs.row_mut(b).copy_from_slice(&s.probs);
    }
    LossOutput {
        l_st: fwd.l_st,
        l_reg: fwd.l_reg,
        total: fwd.l_st + fwd.l_reg,
        probs,
        pbar_used: fwd.pbar,
    }
}

pub fn compute_loss(
    state: &TrainerState,
    plb: &PseudoLabelBatch,
    strong: &Matrix,
    cfg: &TrainConfig,
) -> Result<LossOutput, TrainError> {
    let fwd = forward(state, plb, strong, cfg)?;
    Ok(output(fwd, state.cda.num_classes()))
}

pub fn compute_gradients(
    state: &TrainerState,
    plb: &PseudoLabelBatch,
    strong: &Matrix,
    cfg: &TrainConfig,
) -> Result<Gradients, TrainError> {
    loss_and_gradients(state, plb, strong, cfg).map(|(_, g)| g)
}

/// Forward and backward pass in one go.
pub fn loss_and_gradients(
    state: &TrainerState,
    plb: &PseudoLabelBatch,
    strong: &Matrix,
    cfg: &TrainConfig,
) -> Result<(LossOutput, Gradients), TrainError> {
    let fwd = forward(state, plb, strong, cfg)?;
    let anchors = &state.cda.anchors;
    let (c, d) = (anchors.rows(), anchors.cols());
    let batch = fwd.samples.len() as f64;
    let s = cfg.logit_scale;

    // dL_reg/dp_bk = -alpha / (B c pbar_k)
    let reg_coef: Vec<f64> = fwd.pbar.iter().map(|p| -fwd.alpha / (batch * c as f64 * p)).collect();

    // per-sample contributions, reduced below in index order
    let parts = map_indexed(cfg.execution, fwd.samples.len(), |b| {
        let sf = &fwd.samples[b];
        let p = &sf.probs;
        let weighted: f64 = p.iter().zip(&reg_coef).map(|(pk, r)| pk * r).sum();
        // dL/dsim_j
        let dsim: Vec<f64> = (0..c)
            .map(|j| {
                let target = if j == plb.labels[b] { 1.0 } else { 0.0 };
                let st = plb.gamma[b] / batch * (p[j] - target);
                let reg = p[j] * (reg_coef[j] - weighted);
                s * (st + reg)
            })
            .collect();

        let mut d_u = vec![0.0; d];
        let mut d_z = Matrix::zeros(c, d);
        for j in 0..c {
            let z = anchors.row(j);
            let g = dsim[j];
            match cfg.similarity {
                Similarity::Cosine => {
                    let nz = fwd.anchor_norms[j];
                    let inv = 1.0 / (sf.u_norm * nz);
                    let cu = sf.sims[j] / (sf.u_norm * sf.u_norm);
                    let cz = sf.sims[j] / (nz * nz);
                    let dz = d_z.row_mut(j);
                    for t in 0..d {
                        d_u[t] += g * (z[t] * inv - cu * sf.u[t]);
                        dz[t] = g * (sf.u[t] * inv - cz * z[t]);
                    }
                }
                Similarity::RawDot => {
                    let dz = d_z.row_mut(j);
                    for t in 0..d {
                        d_u[t] += g * z[t];
                        dz[t] = g * sf.u[t];
                    }
                }
            }
        }
        let x = strong.row(b);
        let d_scale: Vec<f64> = d_u.iter().zip(x).map(|(g, xi)| g * xi).collect();
        (d_z, d_scale, d_u)
    });

    let mut grads = Gradients {
        anchors: Matrix::zeros(c, d),
        scale: vec![0.0; d],
        shift: vec![0.0; d],
    };
    for (d_z, d_scale, d_shift) in parts {
        grads
            .anchors
            .as_mut_slice()
            .iter_mut()
            .zip(d_z.as_slice())
            .for_each(|(a, b)| *a += b);
        grads.scale.iter_mut().zip(&d_scale).for_each(|(a, b)| *a += b);
        grads.shift.iter_mut().zip(&d_shift).for_each(|(a, b)| *a += b);
    }
    Ok((output(fwd, c), grads))
}
