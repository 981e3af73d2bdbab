//! The reference synthetic fixture and the bisection that calibrates it.
//!
//! The fixture has 10 classes in 64 dimensions with 500 images, 16 crops and
//! 8 strong variants each. Its cluster separation is chosen so that CuPL
//! zero-shot accuracy lands near 0.70; [`REFERENCE_SEPARATION`] is the frozen
//! output of [`calibrate_separation`] on [`reference_base`].

use crate::align::{cupl_scores, predict_label, AlignError};
use crate::embdata::{synth_generate, EmbeddingDataset, SynthError, SynthSpec};
use crate::exec::{try_map_indexed, Execution};

pub const REFERENCE_SEPARATION: f64 = 0.3125;

/// Reference fixture parameters with the separation left at zero.
pub fn reference_base() -> SynthSpec {
    SynthSpec {
        classes: 10,
        images: 500,
        crops: 16,
        strong: 8,
        dim: 64,
        cls_dim: 32,
        descriptions: 4,
        cluster_separation: 0.0,
        image_noise: 0.15,
        crop_noise: 0.15,
        description_bias: 0.8,
        description_noise: 0.3,
        strong_noise: 0.3,
        seed: 2024,
    }
}

pub fn reference_spec() -> SynthSpec {
    SynthSpec { cluster_separation: REFERENCE_SEPARATION, ..reference_base() }
}

pub fn reference_fixture() -> EmbeddingDataset {
    synth_generate(&reference_spec()).expect("reference fixture spec is valid")
}

/// CuPL zero-shot top-1 accuracy on a labeled dataset.
pub fn cupl_accuracy(ds: &EmbeddingDataset, exec: Execution) -> Result<f64, AlignError> {
    let preds = try_map_indexed(exec, ds.images.len(), |i| {
        let s = cupl_scores(&ds.images[i].f_global, ds.classes.iter().map(|c| &c.descriptions))?;
        Ok::<_, AlignError>(predict_label(&s))
    })?;
    let correct = preds
        .iter()
        .zip(&ds.images)
        .filter(|(p, im)| im.label == Some(**p))
        .count();
    Ok(correct as f64 / ds.images.len().max(1) as f64)
}

/// Bisects `cluster_separation` in `[lo, hi]` until CuPL accuracy is within
/// `tol` of `target`. Returns the separation and the accuracy it produced.
pub fn calibrate_separation(
    base: &SynthSpec,
    target: f64,
    tol: f64,
    (mut lo, mut hi): (f64, f64),
    max_iter: usize,
) -> Result<(f64, f64), SynthError> {
    let measure = |sep: f64| -> Result<f64, SynthError> {
        let ds = synth_generate(&SynthSpec { cluster_separation: sep, ..base.clone() })?;
        cupl_accuracy(&ds, Execution::Parallel).map_err(|e| SynthError::Invalid(e.to_string()))
    };
    let mut best = (hi, measure(hi)?);
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let acc = measure(mid)?;
        if (acc - target).abs() < (best.1 - target).abs() {
            best = (mid, acc);
        }
        if (acc - target).abs() <= tol {
            return Ok((mid, acc));
        }
        if acc < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}
