//! Central finite differences against the analytic gradients.

use fair_core::align::TopKSelection;
use fair_core::cda::{Adapter, Cda};
use fair_core::selftrain::{
    compute_loss, loss_and_gradients, PbarMode, PseudoLabelBatch, Similarity, TrainConfig, TrainError, TrainerState,
};
use fair_core::Matrix;

use crate::oracle::LossInstance;
use crate::to_matrix;

pub struct Problem {
    pub state: TrainerState,
    pub plb: PseudoLabelBatch,
    pub strong: Matrix,
    pub cfg: TrainConfig,
}

/// Turns a loss instance into library inputs. Pseudo-label metadata other
/// than labels and weights is filled with placeholders the loss never reads.
pub fn problem(inst: &LossInstance) -> Problem {
    let c = inst.anchors.len();
    let batch = inst.labels.len();
    let cda = Cda {
        anchors: to_matrix(&inst.anchors),
        class_names: (0..c).map(|j| format!("class_{j}")).collect(),
    };
    let adapter = Adapter { scale: inst.scale.clone(), shift: inst.shift.clone() };
    let mut state = TrainerState::new(cda, adapter);
    let mut cfg = TrainConfig { logit_scale: inst.logit_scale, ..TrainConfig::default() };
    if let Some((m, prev)) = &inst.ema {
        cfg.pbar_mode = PbarMode::Ema { momentum: *m };
        state.pbar = prev.clone();
    }
    if inst.raw_dot {
        cfg.similarity = Similarity::RawDot;
    }
    let plb = PseudoLabelBatch {
        labels: inst.labels.clone(),
        gamma: inst.gamma.clone(),
        top1: vec![0.0; batch],
        top2: vec![0.0; batch],
        selections: vec![TopKSelection { indices: Vec::new() }; batch],
        crop_subsets: vec![Vec::new(); batch],
        scores: vec![vec![0.0; c]; batch],
        degenerate: vec![false; batch],
    };
    Problem { state, plb, strong: to_matrix(&inst.strong), cfg }
}

/// Worst relative error over one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub block: &'static str,
    /// `max |analytic - numeric| / max(max |analytic|, max |numeric|, floor)`.
    pub rel: f64,
}

/// Scale floor for the relative error, so blocks whose true gradient is
/// numerically zero are judged against FD round-off rather than zero.
pub const REL_FLOOR: f64 = 1e-6;

fn block_error(block: &'static str, analytic: &[f64], numeric: &[f64]) -> BlockError {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(REL_FLOOR, f64::max);
    BlockError { block, rel: diff / scale }
}

/// Compares analytic gradients with central differences of step `h` for the
/// anchors, the adapter scale and the adapter shift.
pub fn check(inst: &LossInstance, h: f64) -> Result<Vec<BlockError>, TrainError> {
    let p = problem(inst);
    let (_, grads) = loss_and_gradients(&p.state, &p.plb, &p.strong, &p.cfg)?;

    let total = |state: &TrainerState| -> Result<f64, TrainError> {
        Ok(compute_loss(state, &p.plb, &p.strong, &p.cfg)?.total)
    };
    let central = |set: &dyn Fn(&mut TrainerState, f64)| -> Result<f64, TrainError> {
        let mut plus = p.state.clone();
        set(&mut plus, h);
        let mut minus = p.state.clone();
        set(&mut minus, -h);
        Ok((total(&plus)? - total(&minus)?) / (2.0 * h))
    };

    let (c, d) = (inst.anchors.len(), inst.scale.len());
    let mut num_anchors = Vec::with_capacity(c * d);
    for idx in 0..c * d {
        num_anchors.push(central(&|s, delta| s.cda.anchors.as_mut_slice()[idx] += delta)?);
    }
    let mut num_scale = Vec::with_capacity(d);
    let mut num_shift = Vec::with_capacity(d);
    for t in 0..d {
        num_scale.push(central(&|s, delta| s.adapter.scale[t] += delta)?);
        num_shift.push(central(&|s, delta| s.adapter.shift[t] += delta)?);
    }
    Ok(vec![
        block_error("anchors", grads.anchors.as_slice(), &num_anchors),
        block_error("scale", &grads.scale, &num_scale),
        block_error("shift", &grads.shift, &num_shift),
    ])
}

pub fn worst(errors: &[BlockError]) -> &BlockError {
    errors
        .iter()
        .max_by(|a, b| a.rel.total_cmp(&b.rel))
        .expect("at least one block")
}
