//! Binary dataset format.
//!
//! ```text
//! "FAIREMB1"                      8 bytes
//! header length                   u32 LE
//! header JSON                     UTF-8
//! per class:  M_y x d descriptions, d prompt embedding          (f32 LE)
//! per image:  d f_global, d_cls g_global, N x d crops,
//!             N x d_cls crop CLS, R x d strong                   (f32 LE)
//!             label                                              (i32 LE, -1 = absent)
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate_dataset, validate_header, ClassRecord, DatasetHeader, EmbeddingDataset, ImageRecord, Violation};
use crate::linalg::Matrix;

pub const DATASET_MAGIC: &[u8; 8] = b"FAIREMB1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("stream truncated in {section} section")]
    Truncated { section: &'static str },
    #[error("malformed {section} section: {detail}")]
    Malformed { section: &'static str, detail: String },
    #[error("dimension mismatch in {section} section: {detail}")]
    Dimension { section: &'static str, detail: String },
    #[error("validation failed: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// On-wire header: the dataset header plus the ordered class names.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireHeader {
    #[serde(flatten)]
    header: DatasetHeader,
    class_names: Vec<String>,
}

pub(crate) struct CountingWriter<W> {
    inner: W,
    pub(crate) written: u64,
}

impl<W: Write> CountingWriter<W> {
    pub(crate) fn new(inner: W) -> Self {
        Self { inner, written: 0 }
    }

    pub(crate) fn floats(&mut self, values: &[f64]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(values.len() * 4);
        for &v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.write_all(&buf)
    }
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.written += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Reads with end-of-stream mapped to a section-naming truncation error.
pub(crate) struct SectionReader<R> {
    inner: R,
}

impl<R: Read> SectionReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner }
    }

    pub(crate) fn bytes(&mut self, n: usize, section: &'static str) -> Result<Vec<u8>, FormatError> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => FormatError::Truncated { section },
            _ => FormatError::Io(e),
        })?;
        Ok(buf)
    }

    pub(crate) fn magic(&mut self, magic: &'static [u8; 8]) -> Result<(), FormatError> {
        let found = self.bytes(8, "magic")?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: std::str::from_utf8(magic).unwrap_or("?"),
            });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self, section: &'static str) -> Result<u32, FormatError> {
        let b = self.bytes(4, section)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn i32(&mut self, section: &'static str) -> Result<i32, FormatError> {
        let b = self.bytes(4, section)?;
        Ok(i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn floats(&mut self, n: usize, section: &'static str) -> Result<Vec<f64>, FormatError> {
        let b = self.bytes(n * 4, section)?;
        Ok(b.chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize, section: &'static str) -> Result<Matrix, FormatError> {
        Ok(Matrix::from_vec(rows, cols, self.floats(rows * cols, section)?))
    }

    pub(crate) fn expect_end(&mut self) -> Result<(), FormatError> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(FormatError::Malformed {
                section: "trailer",
                detail: "unexpected bytes after payload".into(),
            }),
        }
    }
}

/// Serializes a valid dataset; returns the number of bytes written.
pub fn write_dataset<W: Write>(ds: &EmbeddingDataset, sink: W) -> Result<u64, FormatError> {
    let violations = validate_dataset(ds);
    if !violations.is_empty() {
        return Err(FormatError::Invalid(violations));
    }
    let wire = WireHeader {
        header: ds.header.clone(),
        class_names: ds.class_names(),
    };
    let json = serde_json::to_vec(&wire).map_err(|e| FormatError::Malformed {
        section: "header",
        detail: e.to_string(),
    })?;
    let len = u32::try_from(json.len()).map_err(|_| FormatError::Malformed {
        section: "header",
        detail: "header exceeds 4 GiB".into(),
    })?;

    let mut w = CountingWriter::new(sink);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    for class in &ds.classes {
        w.floats(class.descriptions.as_slice())?;
        w.floats(&class.prompt_embedding)?;
    }
    for im in &ds.images {
        w.floats(&im.f_global)?;
        w.floats(&im.g_global)?;
        w.floats(im.crops.as_slice())?;
        w.floats(im.crop_cls.as_slice())?;
        w.floats(im.strong.as_slice())?;
        let label = im.label.map_or(-1, |l| l as i32);
        w.write_all(&label.to_le_bytes())?;
    }
    w.flush()?;
    Ok(w.written)
}

/// Parses a dataset and checks every invariant.
pub fn read_dataset<R: Read>(source: R) -> Result<EmbeddingDataset, FormatError> {
    let mut r = SectionReader::new(source);
    r.magic(DATASET_MAGIC)?;
    let len = r.u32("header")? as usize;
    let raw = r.bytes(len, "header")?;
    let wire: WireHeader = serde_json::from_slice(&raw).map_err(|e| FormatError::Malformed {
        section: "header",
        detail: e.to_string(),
    })?;
    let header = wire.header;
    if header.format_version != FORMAT_VERSION {
        return Err(FormatError::Version {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let violations = validate_header(&header);
    if !violations.is_empty() {
        return Err(FormatError::Invalid(violations));
    }
    if wire.class_names.len() != header.num_classes {
        return Err(FormatError::Dimension {
            section: "header",
            detail: format!(
                "{} class names for {} classes",
                wire.class_names.len(),
                header.num_classes
            ),
        });
    }

    let d = header.d;
    let mut classes = Vec::with_capacity(header.num_classes);
    for (name, &m) in wire.class_names.into_iter().zip(&header.descriptions_per_class) {
        let descriptions = r.matrix(m, d, "classes")?;
        let prompt_embedding = r.floats(d, "classes")?;
        classes.push(ClassRecord { name, descriptions, prompt_embedding });
    }

    let (n, d_cls, rv) = (header.crops_per_image, header.d_cls, header.strong_variants);
    let mut images = Vec::with_capacity(header.num_images);
    for _ in 0..header.num_images {
        let f_global = r.floats(d, "images")?;
        let g_global = r.floats(d_cls, "images")?;
        let crops = r.matrix(n, d, "images")?;
        let crop_cls = r.matrix(n, d_cls, "images")?;
        let strong = r.matrix(rv, d, "images")?;
        let label = match r.i32("images")? {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => {
                return Err(FormatError::Malformed {
                    section: "images",
                    detail: format!("negative label {l}"),
                })
            }
        };
        images.push(ImageRecord { f_global, g_global, crops, crop_cls, strong, label });
    }
    r.expect_end()?;

    let ds = EmbeddingDataset { header, classes, images };
    let violations = validate_dataset(&ds);
    if !violations.is_empty() {
        return Err(FormatError::Invalid(violations));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embdata::{synth_generate, SynthSpec};

    fn minimal(labels: bool) -> EmbeddingDataset {
        let header = DatasetHeader {
            format_version: FORMAT_VERSION,
            d: 2,
            d_cls: 2,
            num_images: 1,
            num_classes: 2,
            crops_per_image: 1,
            strong_variants: 1,
            descriptions_per_class: vec![1, 1],
            crop_scale_lo: 0.5,
            crop_scale_hi: 0.9,
            source_model_id: "test".into(),
            rng_seed: 0,
            has_labels: labels,
        };
        let class = |name: &str, v: [f64; 2]| ClassRecord {
            name: name.into(),
            descriptions: Matrix::from_rows(&[v]),
            prompt_embedding: v.to_vec(),
        };
        EmbeddingDataset {
            header,
            classes: vec![class("cat", [1.0, 0.25]), class("dog", [-0.5, 1.0])],
            images: vec![ImageRecord {
                f_global: vec![0.75, 0.125],
                g_global: vec![1.0, -1.0],
                crops: Matrix::from_rows(&[[0.5, 0.5]]),
                crop_cls: Matrix::from_rows(&[[2.0, 1.0]]),
                strong: Matrix::from_rows(&[[0.3125, -0.0625]]),
                label: labels.then_some(1),
            }],
        }
    }

    fn bytes(ds: &EmbeddingDataset) -> Vec<u8> {
        let mut buf = Vec::new();
        let n = write_dataset(ds, &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        buf
    }

    #[test]
    fn minimal_round_trip() {
        let ds = minimal(true);
        assert_eq!(read_dataset(bytes(&ds).as_slice()).unwrap(), ds);
    }

    #[test]
    fn absent_labels_round_trip() {
        let ds = minimal(false);
        let back = read_dataset(bytes(&ds).as_slice()).unwrap();
        assert!(back.images.iter().all(|im| im.label.is_none()));
        assert_eq!(back, ds);
    }

    #[test]
    fn synthetic_writes_are_byte_identical() {
        let spec = SynthSpec { seed: 7, images: 20, ..SynthSpec::default() };
        let a = bytes(&synth_generate(&spec).unwrap());
        let b = bytes(&synth_generate(&spec).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_after_class_payload_names_images() {
        let ds = minimal(true);
        let buf = bytes(&ds);
        // magic + len + json + 2 classes * (1*2 + 2) floats
        let json_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let cut = 12 + json_len + 2 * 4 * 4 + 5;
        let err = read_dataset(&buf[..cut]).unwrap_err();
        assert!(matches!(err, FormatError::Truncated { section: "images" }), "{err}");
        assert!(err.to_string().contains("images"));
    }

    #[test]
    fn zero_dimension_header_fails_before_payload() {
        let mut ds = minimal(true);
        ds.header.d = 0;
        let wire = WireHeader { header: ds.header.clone(), class_names: ds.class_names() };
        let json = serde_json::to_vec(&wire).unwrap();
        let mut buf = DATASET_MAGIC.to_vec();
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        // no payload at all: the header gate must fire first
        match read_dataset(buf.as_slice()) {
            Err(FormatError::Invalid(v)) => assert!(v[0].to_string().contains("d must be > 0")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut buf = bytes(&minimal(true));
        buf[0] = b'X';
        assert!(matches!(read_dataset(buf.as_slice()), Err(FormatError::BadMagic { .. })));

        let mut ds = minimal(true);
        ds.header.format_version = 9;
        let wire = WireHeader { header: ds.header.clone(), class_names: ds.class_names() };
        let json = serde_json::to_vec(&wire).unwrap();
        let mut buf = DATASET_MAGIC.to_vec();
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        assert!(matches!(
            read_dataset(buf.as_slice()),
            Err(FormatError::Version { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut buf = bytes(&minimal(true));
        buf.push(0);
        assert!(matches!(read_dataset(buf.as_slice()), Err(FormatError::Malformed { section: "trailer", .. })));
    }

    #[test]
    fn writer_refuses_invalid_dataset() {
        let mut ds = minimal(true);
        ds.images[0].label = Some(2);
        assert!(matches!(write_dataset(&ds, Vec::new()), Err(FormatError::Invalid(_))));
    }
}
