//! Seeded random instances.

use fair_core::embdata::{ClassRecord, DatasetHeader, EmbeddingDataset, ImageRecord, SynthSpec, FORMAT_VERSION};
use fair_core::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::oracle::LossInstance;
use crate::Rows;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Rows {
    (0..n).map(|_| gaussian_vec(rng, d)).collect()
}

pub fn jitter(rng: &mut ChaCha8Rng, base: &[f64], amount: f64) -> Vec<f64> {
    base.iter().map(|b| b + amount * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// A point on the open simplex.
pub fn simplex(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// One image against `c` classes, with everything every scorer needs.
#[derive(Debug, Clone)]
pub struct ScoreInstance {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub crops: Rows,
    pub crop_cls: Rows,
    pub prompts: Rows,
    /// Per class, `M_j x d`.
    pub descriptions: Vec<Rows>,
    pub anchors: Rows,
    pub k: usize,
}

impl ScoreInstance {
    pub fn n(&self) -> usize {
        self.crops.len()
    }

    pub fn c(&self) -> usize {
        self.anchors.len()
    }
}

/// `N, M_j, c <= 8`, `d, d_cls <= 16`.
pub fn score_instance(rng: &mut ChaCha8Rng) -> ScoreInstance {
    let n = rng.random_range(1..=8);
    let c = rng.random_range(2..=8);
    let d = rng.random_range(2..=16);
    let d_cls = rng.random_range(2..=16);
    let f = gaussian_vec(rng, d);
    let g = gaussian_vec(rng, d_cls);
    let crop_spread = rng.random_range(0.2..2.0);
    let cls_spread = rng.random_range(0.1..3.0);
    let crops = (0..n).map(|_| jitter(rng, &f, crop_spread)).collect();
    let crop_cls = (0..n).map(|_| jitter(rng, &g, cls_spread)).collect();
    let prompts = gaussian_rows(rng, c, d);
    let descriptions = (0..c)
        .map(|_| {
            let m = rng.random_range(1..=8);
            gaussian_rows(rng, m, d)
        })
        .collect();
    let anchors = gaussian_rows(rng, c, d);
    let k = rng.random_range(1..=n);
    ScoreInstance { f, g, crops, crop_cls, prompts, descriptions, anchors, k }
}

/// A random loss instance of the given shape; half of them use the
/// moving-average estimate of the mean prediction.
pub fn loss_instance(rng: &mut ChaCha8Rng, c: usize, d: usize, batch: usize, logit_scale: f64) -> LossInstance {
    let ema = rng
        .random_bool(0.5)
        .then(|| (rng.random_range(0.5..0.95), simplex(rng, c)));
    LossInstance {
        anchors: gaussian_rows(rng, c, d),
        scale: (0..d).map(|_| rng.random_range(0.5..1.5)).collect(),
        shift: (0..d).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect(),
        strong: gaussian_rows(rng, batch, d),
        labels: (0..batch).map(|_| rng.random_range(0..c)).collect(),
        gamma: (0..batch).map(|_| rng.random_range(0.0..1.0)).collect(),
        logit_scale,
        ema,
        raw_dot: false,
    }
}

fn f32_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let data = (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal) as f64).collect();
    Matrix::from_vec(n, d, data)
}

fn f32_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f32, _>(StandardNormal) as f64).collect()
}

/// A small valid dataset with arbitrary shapes and f32-exact payloads.
pub fn dataset(rng: &mut ChaCha8Rng) -> EmbeddingDataset {
    let c = rng.random_range(2..=4);
    let u = rng.random_range(0..=6);
    let n = rng.random_range(1..=4);
    let r = rng.random_range(1..=3);
    let d = rng.random_range(1..=6);
    let d_cls = rng.random_range(1..=5);
    let has_labels = rng.random_bool(0.5);
    let m: Vec<usize> = (0..c).map(|_| rng.random_range(1..=3)).collect();
    let lo = rng.random_range(0.1..0.9);
    let classes = (0..c)
        .map(|j| ClassRecord {
            name: format!("c{j}-{}", rng.random_range(0..1000)),
            descriptions: f32_rows(rng, m[j], d),
            prompt_embedding: f32_vec(rng, d),
        })
        .collect();
    let images = (0..u)
        .map(|_| ImageRecord {
            f_global: f32_vec(rng, d),
            g_global: f32_vec(rng, d_cls),
            crops: f32_rows(rng, n, d),
            crop_cls: f32_rows(rng, n, d_cls),
            strong: f32_rows(rng, r, d),
            label: has_labels.then(|| rng.random_range(0..c)),
        })
        .collect();
    EmbeddingDataset {
        header: DatasetHeader {
            format_version: FORMAT_VERSION,
            d,
            d_cls,
            num_images: u,
            num_classes: c,
            crops_per_image: n,
            strong_variants: r,
            descriptions_per_class: m,
            crop_scale_lo: lo,
            crop_scale_hi: rng.random_range(lo..=1.0),
            source_model_id: "random".into(),
            rng_seed: rng.random(),
            has_labels,
        },
        classes,
        images,
    }
}

/// A small synthetic spec that trains in milliseconds.
pub fn small_spec(rng: &mut ChaCha8Rng) -> SynthSpec {
    let classes = rng.random_range(2..=4);
    SynthSpec {
        classes,
        images: rng.random_range(4..=24),
        crops: rng.random_range(2..=6),
        strong: rng.random_range(1..=3),
        dim: rng.random_range(classes + 1..=10),
        cls_dim: rng.random_range(2..=6),
        descriptions: rng.random_range(1..=3),
        cluster_separation: rng.random_range(0.3..3.0),
        image_noise: rng.random_range(0.0..0.5),
        crop_noise: rng.random_range(0.0..0.5),
        description_bias: rng.random_range(0.0..0.5),
        description_noise: rng.random_range(0.0..0.5),
        strong_noise: rng.random_range(0.0..0.5),
        seed: rng.random(),
    }
}
