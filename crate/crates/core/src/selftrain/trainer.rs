use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cosine_lr, loss_and_gradients, pseudo_label_batch, AdamW, TrainConfig, TrainError, TrainerState};
use crate::cda::{init_cda_with, Adapter, Checkpoint};
use crate::embdata::{validate_dataset, EmbeddingDataset};
use crate::eval::evaluate;
use crate::linalg::Matrix;
use crate::seed::{derive, stream, TAG_CROPS, TAG_SHUFFLE, TAG_STRONG};

/// One JSON-lines record per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u64,
    /// Optimizer steps taken so far.
    pub step: u64,
    #[serde(rename = "L_st")]
    pub l_st: f64,
    #[serde(rename = "L_reg")]
    pub l_reg: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub pl_acc: Option<f64>,
    pub eval_acc: Option<f64>,
    pub gamma_mean: f64,
    pub degenerate_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Evaluation accuracy before the first step.
    pub initial_eval_acc: Option<f64>,
}

/// Trains from freshly initialized anchors and an identity adapter.
///
/// Evaluation runs on `eval_set` if given, otherwise on `dataset` when it
/// carries labels.
pub fn train(
    dataset: &EmbeddingDataset,
    eval_set: Option<&EmbeddingDataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_from(dataset, eval_set, cfg, None)
}

/// Like [`train`], optionally resuming from a checkpoint's anchors and
/// adapter. Epoch numbering continues from the checkpoint.
pub fn train_from(
    dataset: &EmbeddingDataset,
    eval_set: Option<&EmbeddingDataset>,
    cfg: &TrainConfig,
    resume: Option<&Checkpoint>,
) -> Result<TrainOutcome, TrainError> {
    let violations = validate_dataset(dataset);
    if let Some(v) = violations.first() {
        return Err(TrainError::Dataset(format!("{v} ({} violations)", violations.len())));
    }
    if !cfg.fairg_mode {
        cfg.validate_for(dataset.header.crops_per_image)?;
    } else {
        cfg.validate()?;
    }

    let (cda, adapter, first_epoch) = match resume {
        Some(ck) => {
            if ck.cda.dim() != dataset.header.d || ck.cda.class_names != dataset.class_names() {
                return Err(TrainError::Shape("checkpoint does not match the dataset's classes or dimension".into()));
            }
            (ck.cda.clone(), ck.adapter.clone(), ck.epoch)
        }
        None => (
            init_cda_with(&dataset.classes, cfg.prenormalize_descriptions)?,
            Adapter::fresh(dataset.header.d),
            0,
        ),
    };
    let mut state = TrainerState::new(cda, adapter);

    let eval_target = eval_set.or(Some(dataset)).filter(|ds| ds.labels().is_some());
    let run_eval = |state: &TrainerState| -> Result<Option<f64>, TrainError> {
        match eval_target {
            Some(ds) => Ok(Some(evaluate(ds, &state.cda, &state.adapter, cfg.execution)?.top1)),
            None => Ok(None),
        }
    };
    let initial_eval_acc = run_eval(&state)?;
    let truth = dataset.labels();

    let u = dataset.images.len();
    let (c, d) = (state.cda.num_classes(), state.cda.dim());
    let steps_per_epoch = u.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut opt = AdamW::new(c * d + 2 * d, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    let mut params = vec![0.0; c * d + 2 * d];
    let mut grads = vec![0.0; c * d + 2 * d];
    let mut log = Vec::with_capacity(cfg.epochs);

    for e in 0..cfg.epochs as u64 {
        let epoch = first_epoch + e + 1;
        let mut order: Vec<usize> = (0..u).collect();
        order.shuffle(&mut stream(cfg.seed, &[TAG_SHUFFLE, epoch]));

        let (mut sum_st, mut sum_reg, mut sum_gamma) = (0.0, 0.0, 0.0);
        let (mut pl_correct, mut degenerate, mut batches) = (0usize, 0u64, 0usize);

        for chunk in order.chunks(cfg.batch_size) {
            let images: Vec<_> = chunk.iter().map(|&i| &dataset.images[i]).collect();
            let crop_keys: Vec<u64> = chunk
                .iter()
                .map(|&i| derive(cfg.seed, &[TAG_CROPS, epoch, i as u64]))
                .collect();
            let plb = pseudo_label_batch(&state, &images, &crop_keys, cfg)?;

            let mut strong = Matrix::zeros(chunk.len(), d);
            for (b, &i) in chunk.iter().enumerate() {
                let variants = &dataset.images[i].strong;
                let r = stream(cfg.seed, &[TAG_STRONG, epoch, i as u64]).random_range(0..variants.rows());
                strong.row_mut(b).copy_from_slice(variants.row(r));
            }

            let (out, g) = loss_and_gradients(&state, &plb, &strong, cfg).map_err(|e| match e {
                TrainError::Numeric(m) => TrainError::Numeric(format!("epoch {epoch}, step {}: {m}", state.step + 1)),
                other => other,
            })?;
            if !out.total.is_finite() || g.anchors.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step: state.step + 1,
                    l_st: out.l_st,
                    l_reg: out.l_reg,
                });
            }

            params[..c * d].copy_from_slice(state.cda.anchors.as_slice());
            params[c * d..c * d + d].copy_from_slice(&state.adapter.scale);
            params[c * d + d..].copy_from_slice(&state.adapter.shift);
            grads[..c * d].copy_from_slice(g.anchors.as_slice());
            grads[c * d..c * d + d].copy_from_slice(&g.scale);
            grads[c * d + d..].copy_from_slice(&g.shift);

            let global_step = (e as usize) * steps_per_epoch + batches;
            opt.step(&mut params, &grads, cosine_lr(cfg.learning_rate, global_step, total_steps));

            state.cda.anchors.as_mut_slice().copy_from_slice(&params[..c * d]);
            state.adapter.scale.copy_from_slice(&params[c * d..c * d + d]);
            state.adapter.shift.copy_from_slice(&params[c * d + d..]);
            state.pbar = out.pbar_used;
            state.step += 1;

            sum_st += out.l_st;
            sum_reg += out.l_reg;
            sum_gamma += plb.gamma.iter().sum::<f64>();
            degenerate += plb.degenerate_count() as u64;
            if let Some(t) = &truth {
                pl_correct += chunk.iter().zip(&plb.labels).filter(|(&i, &y)| t[i] == y).count();
            }
            batches += 1;
        }

        let nb = batches.max(1) as f64;
        log.push(EpochLog {
            epoch,
            step: state.step,
            l_st: sum_st / nb,
            l_reg: sum_reg / nb,
            l: (sum_st + sum_reg) / nb,
            pl_acc: truth.as_ref().filter(|_| u > 0).map(|_| pl_correct as f64 / u as f64),
            eval_acc: run_eval(&state)?,
            gamma_mean: sum_gamma / u.max(1) as f64,
            degenerate_count: degenerate,
        });
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(&state.cda, &state.adapter, first_epoch + cfg.epochs as u64, cfg.hash()),
        log,
        initial_eval_acc,
    })
}
