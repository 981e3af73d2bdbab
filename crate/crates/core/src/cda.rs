//! Trainable state: class description anchors and the image-feature adapter.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embdata::{ClassRecord, CountingWriter, FormatError, SectionReader};
use crate::linalg::{norm, quantize_f32, Matrix};
use crate::EPS;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FAIRCKP1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CdaError {
    #[error("class {name:?} has no descriptions")]
    EmptyClass { name: String },
    #[error("no classes given")]
    NoClasses,
    #[error("description width {found} differs from {expected} in class {name:?}")]
    Width { name: String, expected: usize, found: usize },
}

/// Class description anchors: one trainable row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Cda {
    /// `c x d`, never re-normalized.
    pub anchors: Matrix,
    /// Row order is the class index map.
    pub class_names: Vec<String>,
}

impl Cda {
    pub fn num_classes(&self) -> usize {
        self.anchors.rows()
    }

    pub fn dim(&self) -> usize {
        self.anchors.cols()
    }

    /// Human-readable invariant violations (zero-norm or non-finite rows).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.class_names.len() != self.anchors.rows() {
            out.push(format!(
                "{} class names for {} anchor rows",
                self.class_names.len(),
                self.anchors.rows()
            ));
        }
        for (j, row) in self.anchors.iter_rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                out.push(format!("non-finite anchor for class {j}"));
            } else if norm(row) <= EPS {
                out.push(format!("zero-norm anchor for class {j}"));
            }
        }
        out
    }
}

/// Anchor `j` is the plain mean of class `j`'s description embeddings.
pub fn init_cda(classes: &[ClassRecord]) -> Result<Cda, CdaError> {
    init_cda_with(classes, false)
}

/// [`init_cda`], optionally unit-normalizing each description before
/// averaging.
pub fn init_cda_with(classes: &[ClassRecord], prenormalize: bool) -> Result<Cda, CdaError> {
    let first = classes.first().ok_or(CdaError::NoClasses)?;
    let d = first.descriptions.cols();
    let mut anchors = Matrix::zeros(classes.len(), d);
    for (j, class) in classes.iter().enumerate() {
        let m = class.descriptions.rows();
        if m == 0 {
            return Err(CdaError::EmptyClass { name: class.name.clone() });
        }
        if class.descriptions.cols() != d {
            return Err(CdaError::Width {
                name: class.name.clone(),
                expected: d,
                found: class.descriptions.cols(),
            });
        }
        let out = anchors.row_mut(j);
        for row in class.descriptions.iter_rows() {
            let scale = if prenormalize {
                let n = norm(row);
                if n > EPS { 1.0 / n } else { 0.0 }
            } else {
                1.0
            };
            out.iter_mut().zip(row).for_each(|(a, x)| *a += scale * x);
        }
        out.iter_mut().for_each(|a| *a /= m as f64);
    }
    Ok(Cda {
        anchors,
        class_names: classes.iter().map(|c| c.name.clone()).collect(),
    })
}

/// Per-dimension affine map `scale * x + shift` on image-branch features.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Adapter {
    /// Identity adapter.
    pub fn fresh(d: usize) -> Self {
        Self {
            scale: vec![1.0; d],
            shift: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn apply(&self, feature: &[f64]) -> Vec<f64> {
        adapter_apply(self, feature)
    }

    /// Applies the adapter to every row.
    pub fn apply_rows(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.rows() {
            for (t, x) in out.row_mut(i).iter_mut().enumerate() {
                *x = self.scale[t] * *x + self.shift[t];
            }
        }
        out
    }
}

pub fn adapter_apply(adapter: &Adapter, feature: &[f64]) -> Vec<f64> {
    debug_assert_eq!(adapter.dim(), feature.len());
    feature
        .iter()
        .zip(adapter.scale.iter().zip(&adapter.shift))
        .map(|(x, (s, b))| s * x + b)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub cda: Cda,
    pub adapter: Adapter,
    pub epoch: u64,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    c: usize,
    d: usize,
    epoch: u64,
    config_hash: String,
    class_names: Vec<String>,
}

/// Raised when a checkpoint is resumed under a different configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigMismatch {
    pub stored: String,
    pub current: String,
}

impl std::fmt::Display for ConfigMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "checkpoint was written under config {} but the current config hashes to {}",
            self.stored, self.current
        )
    }
}

impl Checkpoint {
    /// Builds a checkpoint with every value rounded through `f32`, so that
    /// saving and loading it is lossless.
    pub fn new(cda: &Cda, adapter: &Adapter, epoch: u64, config_hash: impl Into<String>) -> Self {
        let mut cda = cda.clone();
        let mut adapter = adapter.clone();
        cda.anchors.quantize_f32();
        quantize_f32(&mut adapter.scale);
        quantize_f32(&mut adapter.shift);
        Self {
            cda,
            adapter,
            epoch,
            config_hash: config_hash.into(),
        }
    }

    /// `Some` when the stored config hash differs from `current`.
    pub fn check_config(&self, current: &str) -> Option<ConfigMismatch> {
        (self.config_hash != current).then(|| ConfigMismatch {
            stored: self.config_hash.clone(),
            current: current.to_string(),
        })
    }
}

pub fn save_checkpoint<W: Write>(ckpt: &Checkpoint, sink: W) -> Result<u64, FormatError> {
    let (c, d) = (ckpt.cda.num_classes(), ckpt.cda.dim());
    if ckpt.adapter.scale.len() != d || ckpt.adapter.shift.len() != d || ckpt.cda.class_names.len() != c {
        return Err(FormatError::Dimension {
            section: "checkpoint",
            detail: format!(
                "anchors {c}x{d}, {} names, adapter {}/{}",
                ckpt.cda.class_names.len(),
                ckpt.adapter.scale.len(),
                ckpt.adapter.shift.len()
            ),
        });
    }
    let header = CheckpointHeader {
        c,
        d,
        epoch: ckpt.epoch,
        config_hash: ckpt.config_hash.clone(),
        class_names: ckpt.cda.class_names.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| FormatError::Malformed {
        section: "header",
        detail: e.to_string(),
    })?;
    let mut w = CountingWriter::new(sink);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.floats(ckpt.cda.anchors.as_slice())?;
    w.floats(&ckpt.adapter.scale)?;
    w.floats(&ckpt.adapter.shift)?;
    w.flush()?;
    Ok(w.written)
}

pub fn load_checkpoint<R: Read>(source: R) -> Result<Checkpoint, FormatError> {
    let mut r = SectionReader::new(source);
    r.magic(CHECKPOINT_MAGIC)?;
    let len = r.u32("header")? as usize;
    let raw = r.bytes(len, "header")?;
    let h: CheckpointHeader = serde_json::from_slice(&raw).map_err(|e| FormatError::Malformed {
        section: "header",
        detail: e.to_string(),
    })?;
    if h.class_names.len() != h.c || h.c == 0 || h.d == 0 {
        return Err(FormatError::Dimension {
            section: "header",
            detail: format!("c = {}, d = {}, {} class names", h.c, h.d, h.class_names.len()),
        });
    }
    let anchors = r.matrix(h.c, h.d, "anchors")?;
    let scale = r.floats(h.d, "adapter")?;
    let shift = r.floats(h.d, "adapter")?;
    r.expect_end()?;
    Ok(Checkpoint {
        cda: Cda { anchors, class_names: h.class_names },
        adapter: Adapter { scale, shift },
        epoch: h.epoch,
        config_hash: h.config_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::cosine_sim;

    fn class(name: &str, rows: &[[f64; 3]]) -> ClassRecord {
        ClassRecord {
            name: name.into(),
            descriptions: Matrix::from_rows(rows),
            prompt_embedding: rows[0].to_vec(),
        }
    }

    #[test]
    fn single_description_is_its_own_anchor() {
        let cda = init_cda(&[class("a", &[[1.0, 2.0, 3.0]]), class("b", &[[0.0, 1.0, 0.0]])]).unwrap();
        assert_eq!(cda.anchors.row(0), &[1.0, 2.0, 3.0]);
        assert!(cda.violations().is_empty());
    }

    #[test]
    fn opposite_descriptions_give_flagged_anchor() {
        let cda = init_cda(&[class("a", &[[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]]), class("b", &[[0.0, 1.0, 0.0]])])
            .unwrap();
        assert_eq!(cda.violations(), vec!["zero-norm anchor for class 0".to_string()]);
    }

    #[test]
    fn empty_class_is_named() {
        let empty = ClassRecord {
            name: "ghost".into(),
            descriptions: Matrix::zeros(0, 3),
            prompt_embedding: vec![1.0, 0.0, 0.0],
        };
        let err = init_cda(&[class("a", &[[1.0, 0.0, 0.0]]), empty]).unwrap_err();
        assert_eq!(err, CdaError::EmptyClass { name: "ghost".into() });
    }

    #[test]
    fn prenormalized_mean() {
        let cda = init_cda_with(&[class("a", &[[2.0, 0.0, 0.0], [0.0, 4.0, 0.0]])], true).unwrap();
        assert_eq!(cda.anchors.row(0), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn adapter_examples() {
        let f = [0.3, -1.2];
        assert_eq!(Adapter::fresh(2).apply(&f), f.to_vec());

        let double = Adapter { scale: vec![2.0, 2.0], shift: vec![0.0, 0.0] };
        let v = [0.7, 0.1];
        let a = cosine_sim(&double.apply(&f), &v).unwrap();
        let b = cosine_sim(&f, &v).unwrap();
        assert!((a - b).abs() < 1e-15);

        let ad = Adapter { scale: vec![1.0, 2.0], shift: vec![0.5, 0.0] };
        assert_eq!(ad.apply(&[1.0, 1.0]), vec![1.5, 2.0]);
    }

    fn sample_checkpoint() -> Checkpoint {
        let cda = Cda {
            anchors: Matrix::from_rows(&[[0.1, 0.2], [0.3, -0.4]]),
            class_names: vec!["x".into(), "y".into()],
        };
        let adapter = Adapter { scale: vec![1.1, 0.9], shift: vec![0.01, -0.02] };
        Checkpoint::new(&cda, &adapter, 3, "abc")
    }

    #[test]
    fn checkpoint_round_trip_and_truncation() {
        let ck = sample_checkpoint();
        let mut buf = Vec::new();
        let n = save_checkpoint(&ck, &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        assert_eq!(load_checkpoint(buf.as_slice()).unwrap(), ck);

        let err = load_checkpoint(&buf[..buf.len() - 3]).unwrap_err();
        assert!(matches!(err, FormatError::Truncated { section: "adapter" }), "{err}");
    }

    #[test]
    fn config_mismatch_is_reported() {
        let ck = sample_checkpoint();
        assert!(ck.check_config("abc").is_none());
        let m = ck.check_config("def").unwrap();
        assert_eq!(m.stored, "abc");
        assert!(m.to_string().contains("def"));
    }
}
