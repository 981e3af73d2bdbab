use std::collections::HashSet;
use std::fmt;

use super::{DatasetHeader, EmbeddingDataset};
use crate::linalg::norm;
use crate::EPS;

/// One violated dataset invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Header(String),
    ClassCount { expected: usize, found: usize },
    ImageCount { expected: usize, found: usize },
    DuplicateClassName(String),
    Shape { location: String, expected: (usize, usize), found: (usize, usize) },
    NonFinite { location: String },
    ZeroNorm { location: String },
    LabelOutOfRange { image: usize, label: usize },
    LabelPresence { image: usize, expected: bool },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Header(msg) => write!(f, "header: {msg}"),
            Violation::ClassCount { expected, found } => {
                write!(f, "class count {found} does not match header ({expected})")
            }
            Violation::ImageCount { expected, found } => {
                write!(f, "image count {found} does not match header ({expected})")
            }
            Violation::DuplicateClassName(name) => write!(f, "duplicate class name {name:?}"),
            Violation::Shape { location, expected, found } => write!(
                f,
                "shape mismatch at {location}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Violation::NonFinite { location } => write!(f, "non-finite value at {location}"),
            Violation::ZeroNorm { location } => write!(f, "zero-norm feature at {location}"),
            Violation::LabelOutOfRange { image, label } => {
                write!(f, "label out of range at image {image}: {label}")
            }
            Violation::LabelPresence { image, expected } => {
                if *expected {
                    write!(f, "missing label at image {image} (header has_labels = true)")
                } else {
                    write!(f, "unexpected label at image {image} (header has_labels = false)")
                }
            }
        }
    }
}

/// Header-only invariants, checked before any payload is read.
pub fn validate_header(h: &DatasetHeader) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |msg: String| out.push(Violation::Header(msg));
    if h.d == 0 {
        bad("d must be > 0".into());
    }
    if h.d_cls == 0 {
        bad("d_cls must be > 0".into());
    }
    if h.crops_per_image == 0 {
        bad("crops_per_image must be >= 1".into());
    }
    if h.strong_variants == 0 {
        bad("strong_variants must be >= 1".into());
    }
    if h.num_classes < 2 {
        bad(format!("num_classes must be >= 2, got {}", h.num_classes));
    }
    let (lo, hi) = (h.crop_scale_lo, h.crop_scale_hi);
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        bad(format!("crop scales must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"));
    }
    if h.descriptions_per_class.len() != h.num_classes {
        bad(format!(
            "descriptions_per_class has {} entries for {} classes",
            h.descriptions_per_class.len(),
            h.num_classes
        ));
    }
    if let Some(j) = h.descriptions_per_class.iter().position(|&m| m == 0) {
        bad(format!("class {j} has no descriptions"));
    }
    out
}

struct Checker<'a> {
    out: &'a mut Vec<Violation>,
}

impl Checker<'_> {
    fn row(&mut self, location: String, values: &[f64]) {
        if values.iter().any(|v| !v.is_finite()) {
            self.out.push(Violation::NonFinite { location });
        } else if norm(values) <= EPS {
            self.out.push(Violation::ZeroNorm { location });
        }
    }

    fn shape(&mut self, location: String, expected: (usize, usize), found: (usize, usize)) -> bool {
        if expected != found {
            self.out.push(Violation::Shape { location, expected, found });
            false
        } else {
            true
        }
    }
}

/// Checks every dataset invariant; an empty list means valid.
pub fn validate_dataset(ds: &EmbeddingDataset) -> Vec<Violation> {
    let h = &ds.header;
    let mut out = validate_header(h);
    if ds.classes.len() != h.num_classes {
        out.push(Violation::ClassCount { expected: h.num_classes, found: ds.classes.len() });
    }
    if ds.images.len() != h.num_images {
        out.push(Violation::ImageCount { expected: h.num_images, found: ds.images.len() });
    }

    let mut seen = HashSet::new();
    for class in &ds.classes {
        if !seen.insert(class.name.as_str()) {
            out.push(Violation::DuplicateClassName(class.name.clone()));
        }
    }

    let mut ck = Checker { out: &mut out };
    for (j, class) in ds.classes.iter().enumerate() {
        let m = h.descriptions_per_class.get(j).copied().unwrap_or(class.descriptions.rows());
        let found = (class.descriptions.rows(), class.descriptions.cols());
        if ck.shape(format!("class {j} descriptions"), (m, h.d), found) {
            for (r, row) in class.descriptions.iter_rows().enumerate() {
                ck.row(format!("class {j}, description {r}"), row);
            }
        }
        let found = (1, class.prompt_embedding.len());
        if ck.shape(format!("class {j} prompt embedding"), (1, h.d), found) {
            ck.row(format!("class {j}, prompt embedding"), &class.prompt_embedding);
        }
    }

    for (i, im) in ds.images.iter().enumerate() {
        if ck.shape(format!("image {i} f_global"), (1, h.d), (1, im.f_global.len())) {
            ck.row(format!("image {i}, global feature"), &im.f_global);
        }
        if ck.shape(format!("image {i} g_global"), (1, h.d_cls), (1, im.g_global.len())) {
            ck.row(format!("image {i}, global CLS"), &im.g_global);
        }
        let n = h.crops_per_image;
        if ck.shape(format!("image {i} crops"), (n, h.d), (im.crops.rows(), im.crops.cols())) {
            for (r, row) in im.crops.iter_rows().enumerate() {
                ck.row(format!("image {i}, crop {r}"), row);
            }
        }
        let found = (im.crop_cls.rows(), im.crop_cls.cols());
        if ck.shape(format!("image {i} crop CLS"), (n, h.d_cls), found) {
            for (r, row) in im.crop_cls.iter_rows().enumerate() {
                ck.row(format!("image {i}, crop CLS {r}"), row);
            }
        }
        let found = (im.strong.rows(), im.strong.cols());
        if ck.shape(format!("image {i} strong"), (h.strong_variants, h.d), found) {
            for (r, row) in im.strong.iter_rows().enumerate() {
                ck.row(format!("image {i}, strong variant {r}"), row);
            }
        }
        match im.label {
            Some(label) if label >= h.num_classes => {
                ck.out.push(Violation::LabelOutOfRange { image: i, label });
            }
            Some(_) if !h.has_labels => {
                ck.out.push(Violation::LabelPresence { image: i, expected: false });
            }
            None if h.has_labels => {
                ck.out.push(Violation::LabelPresence { image: i, expected: true });
            }
            _ => {}
        }
    }
    out
}
