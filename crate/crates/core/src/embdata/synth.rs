//! Synthetic embedding datasets for desk-scale verification.
//!
//! Class centroids are `normalize(e_0 + separation * e_j)` over a random
//! orthonormal set `{e_0, e_1, .., e_c}`, so every pair of centroids has
//! cosine `1 / (1 + separation^2)`. Noise terms are isotropic Gaussians scaled
//! by `1/sqrt(d)`, which makes each noise parameter roughly the expected norm
//! of the perturbation it adds.
//!
//! Text embeddings of class `j` scatter around a shared text centre
//! `centroid_j + description_bias * noise`, so averaging descriptions removes
//! the per-description spread but not the class's text-side offset.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClassRecord, DatasetHeader, EmbeddingDataset, ImageRecord, FORMAT_VERSION};
use crate::linalg::{dot, norm, quantize_f32, Matrix};
use crate::seed::{stream, TAG_SYNTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub classes: usize,
    pub images: usize,
    /// Crops per image.
    pub crops: usize,
    /// Strong-augmentation variants per image.
    pub strong: usize,
    pub dim: usize,
    pub cls_dim: usize,
    /// Descriptions per class.
    pub descriptions: usize,
    pub cluster_separation: f64,
    /// Spread of image features around their class centroid.
    pub image_noise: f64,
    pub crop_noise: f64,
    /// Per-class offset shared by all descriptions and the prompt of a class.
    pub description_bias: f64,
    /// Independent spread of each description around its class's text centre.
    pub description_noise: f64,
    pub strong_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            images: 64,
            crops: 16,
            strong: 8,
            dim: 32,
            cls_dim: 16,
            descriptions: 4,
            cluster_separation: 1.0,
            image_noise: 0.3,
            crop_noise: 0.3,
            description_bias: 0.0,
            description_noise: 0.3,
            strong_noise: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("cannot place {classes} separated centroids in dimension {dim} (need classes + 1 <= dim)")]
    TooManyClasses { classes: usize, dim: usize },
    #[error("invalid synth spec: {0}")]
    Invalid(String),
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn add_noise(base: &[f64], rng: &mut ChaCha8Rng, amount: f64) -> Vec<f64> {
    let scale = amount / (base.len() as f64).sqrt();
    base.iter()
        .zip(gaussian(rng, base.len(), scale))
        .map(|(b, e)| b + e)
        .collect()
}

/// `count` orthonormal vectors in `dim` dimensions via Gram-Schmidt.
fn orthonormal(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim, 1.0);
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

fn quantized(mut v: Vec<f64>) -> Vec<f64> {
    quantize_f32(&mut v);
    v
}

/// Deterministic synthetic dataset; values are f32-exact so the dataset
/// survives the binary format unchanged.
pub fn synth_generate(spec: &SynthSpec) -> Result<EmbeddingDataset, SynthError> {
    let s = spec;
    if s.classes < 2 {
        return Err(SynthError::Invalid("classes must be >= 2".into()));
    }
    if s.dim == 0 || s.cls_dim == 0 || s.crops == 0 || s.strong == 0 || s.descriptions == 0 {
        return Err(SynthError::Invalid("all dimensions and counts must be positive".into()));
    }
    let noises = [s.image_noise, s.crop_noise, s.description_bias, s.description_noise, s.strong_noise];
    if !(s.cluster_separation >= 0.0) || noises.iter().any(|n| !(*n >= 0.0)) {
        return Err(SynthError::Invalid("separation and noise levels must be finite and >= 0".into()));
    }
    if s.classes + 1 > s.dim {
        return Err(SynthError::TooManyClasses { classes: s.classes, dim: s.dim });
    }

    let mut rng = stream(s.seed, &[TAG_SYNTH]);
    let basis = orthonormal(&mut rng, s.classes + 1, s.dim);
    let centroids: Vec<Vec<f64>> = (1..=s.classes)
        .map(|j| {
            let mut c: Vec<f64> = basis[0]
                .iter()
                .zip(&basis[j])
                .map(|(a, b)| a + s.cluster_separation * b)
                .collect();
            let n = norm(&c);
            c.iter_mut().for_each(|x| *x /= n);
            c
        })
        .collect();
    // fixed projection into CLS space
    let proj = Matrix::from_vec(s.cls_dim, s.dim, gaussian(&mut rng, s.cls_dim * s.dim, 1.0 / (s.dim as f64).sqrt()));
    let project = |f: &[f64]| -> Vec<f64> { proj.iter_rows().map(|row| dot(row, f)).collect() };

    let classes: Vec<ClassRecord> = centroids
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let text_centre = add_noise(c, &mut rng, s.description_bias);
            let rows: Vec<Vec<f64>> = (0..s.descriptions)
                .map(|_| quantized(add_noise(&text_centre, &mut rng, s.description_noise)))
                .collect();
            ClassRecord {
                name: format!("class_{j:03}"),
                descriptions: Matrix::from_rows(&rows),
                prompt_embedding: quantized(add_noise(&text_centre, &mut rng, s.description_noise)),
            }
        })
        .collect();

    let images = (0..s.images)
        .map(|i| {
            let label = i % s.classes;
            let f = add_noise(&centroids[label], &mut rng, s.image_noise);
            let crops: Vec<Vec<f64>> = (0..s.crops).map(|_| add_noise(&f, &mut rng, s.crop_noise)).collect();
            let crop_cls: Vec<Vec<f64>> = crops.iter().map(|c| quantized(project(c))).collect();
            let strong: Vec<Vec<f64>> = (0..s.strong)
                .map(|_| quantized(add_noise(&f, &mut rng, s.strong_noise)))
                .collect();
            ImageRecord {
                g_global: quantized(project(&f)),
                f_global: quantized(f),
                crops: Matrix::from_rows(&crops.into_iter().map(quantized).collect::<Vec<_>>()),
                crop_cls: Matrix::from_rows(&crop_cls),
                strong: Matrix::from_rows(&strong),
                label: Some(label),
            }
        })
        .collect();

    Ok(EmbeddingDataset {
        header: DatasetHeader {
            format_version: FORMAT_VERSION,
            d: s.dim,
            d_cls: s.cls_dim,
            num_images: s.images,
            num_classes: s.classes,
            crops_per_image: s.crops,
            strong_variants: s.strong,
            descriptions_per_class: vec![s.descriptions; s.classes],
            crop_scale_lo: 0.5,
            crop_scale_hi: 0.9,
            source_model_id: "synthetic".into(),
            rng_seed: s.seed,
            has_labels: true,
        },
        classes,
        images,
    })
}
