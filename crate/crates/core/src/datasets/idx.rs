//! IDX files as used by the MNIST/USPS distributions: a big-endian magic
//! (`0x0000_0803` for images, `0x0000_0801` for labels), one big-endian u32
//! per dimension, then raw bytes.

use std::path::Path;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let raw = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.err(self.bytes.len(), format!("truncated while reading {what}")))?;
        self.pos = end;
        Ok(u32::from_be_bytes(raw.try_into().expect("4 bytes")))
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + len;
        let raw = self.bytes.get(self.pos..end).ok_or_else(|| {
            self.err(
                self.bytes.len(),
                format!("truncated {what}: expected {len} bytes from offset {}", self.pos),
            )
        })?;
        self.pos = end;
        Ok(raw)
    }
}

fn check_magic(c: &mut Cursor<'_>, expected: u32) -> Result<()> {
    let magic = c.u32("magic")?;
    if magic != expected {
        return Err(c.err(0, format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}")));
    }
    Ok(())
}

/// Parses an image file into an `n × (rows·cols)` matrix scaled to [0, 1].
pub fn read_idx_images(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    let mut c = Cursor { path, bytes, pos: 0 };
    check_magic(&mut c, IMAGES_MAGIC)?;
    let n = c.u32("image count")? as usize;
    let rows = c.u32("row count")? as usize;
    let cols = c.u32("column count")? as usize;
    let pixels = c.take(n * rows * cols, "pixel data")?;
    let values = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(n, rows * cols, values)
}

pub fn read_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    let mut c = Cursor { path, bytes, pos: 0 };
    check_magic(&mut c, LABELS_MAGIC)?;
    let n = c.u32("label count")? as usize;
    Ok(c.take(n, "label data")?.iter().map(|&b| b as usize).collect())
}

/// Loads an image/label file pair and draws `subsample` of them without
/// replacement.
pub fn load_idx(images_path: &Path, labels_path: &Path, subsample: usize, seed: u64) -> Result<(Matrix, Vec<usize>)> {
    let images = read_idx_images(images_path, &std::fs::read(images_path)?)?;
    let labels = read_idx_labels(labels_path, &std::fs::read(labels_path)?)?;
    if images.rows() != labels.len() {
        return Err(Error::shape("load_idx label count", images.rows(), labels.len()));
    }
    if subsample > images.rows() {
        return Err(Error::Parameter(format!(
            "subsample {subsample} exceeds {} available images",
            images.rows()
        )));
    }
    let picked = sample(&mut seed::rng(seed), images.rows(), subsample).into_vec();
    let y = picked.iter().map(|&i| labels[i]).collect();
    Ok((images.select_rows(&picked), y))
}

pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
