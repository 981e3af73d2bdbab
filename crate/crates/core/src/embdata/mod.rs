//! Precomputed embedding datasets.
//!
//! A dataset is the frozen world the adaptation runs inside: per-image global,
//! crop, CLS and strong-augmentation features plus per-class description
//! embeddings. Features are kept un-normalized; every similarity normalizes
//! at the point of use.

mod format;
mod synth;
mod validate;

pub(crate) use format::{CountingWriter, SectionReader};
pub use format::{read_dataset, write_dataset, FormatError, DATASET_MAGIC, FORMAT_VERSION};
pub use synth::{synth_generate, SynthError, SynthSpec};
pub use validate::{validate_dataset, validate_header, Violation};

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// Dimensions and provenance of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    /// Multimodal embedding dimension.
    pub d: usize,
    /// CLS-token dimension.
    pub d_cls: usize,
    pub num_images: usize,
    pub num_classes: usize,
    pub crops_per_image: usize,
    pub strong_variants: usize,
    pub descriptions_per_class: Vec<usize>,
    /// Crop side fraction bounds used at extraction time.
    pub crop_scale_lo: f64,
    pub crop_scale_hi: f64,
    pub source_model_id: String,
    pub rng_seed: u64,
    pub has_labels: bool,
}

/// Features of one unlabeled (or evaluation-labeled) image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    /// Global multimodal feature of the weak view.
    pub f_global: Vec<f64>,
    /// Global CLS token.
    pub g_global: Vec<f64>,
    /// `N x d` crop features.
    pub crops: Matrix,
    /// `N x d_cls` crop CLS tokens.
    pub crop_cls: Matrix,
    /// `R x d` strong-augmentation features.
    pub strong: Matrix,
    pub label: Option<usize>,
}

/// A class name with its encoded descriptions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecord {
    pub name: String,
    /// `M_y x d` description embeddings.
    pub descriptions: Matrix,
    /// Embedding of the plain "a photo of a {name}" prompt.
    pub prompt_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    pub header: DatasetHeader,
    /// Order defines the class-name to index map.
    pub classes: Vec<ClassRecord>,
    pub images: Vec<ImageRecord>,
}

impl EmbeddingDataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Ground-truth labels, if every image carries one.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.images.iter().map(|im| im.label).collect()
    }

    /// `c x d` matrix of prompt embeddings, one row per class.
    pub fn prompt_matrix(&self) -> Matrix {
        let rows: Vec<&[f64]> = self
            .classes
            .iter()
            .map(|c| c.prompt_embedding.as_slice())
            .collect();
        Matrix::from_rows(&rows)
    }
}
