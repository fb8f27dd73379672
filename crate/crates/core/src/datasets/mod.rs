//! Source/target domain data: synthetic shift generators, seeded
//! mini-batching and IDX ingestion.

mod batching;
mod idx;
mod synthetic;

use std::io::Write;

pub use batching::{iterate_batches, BatchPair, BatchStream};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, read_idx_images, read_idx_labels};
pub use synthetic::{make_imbalanced_gaussians, make_multimode_domains, ImbalancedParams, MultimodeParams};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Labeled source samples and unlabeled target samples.
///
/// Target labels are kept for evaluation only and are not exposed by this
/// type; see [`crate::eval`].
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub source_x: Matrix,
    pub source_y: Vec<usize>,
    pub target_x: Matrix,
    target_y_hidden: Vec<usize>,
    classes: usize,
}

impl DomainDataset {
    pub fn new(
        source_x: Matrix,
        source_y: Vec<usize>,
        target_x: Matrix,
        target_y_hidden: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if source_x.rows() != source_y.len() {
            return Err(Error::shape(
                "DomainDataset source labels",
                source_x.rows(),
                source_y.len(),
            ));
        }
        if target_x.rows() != target_y_hidden.len() {
            return Err(Error::shape(
                "DomainDataset target labels",
                target_x.rows(),
                target_y_hidden.len(),
            ));
        }
        if source_x.cols() != target_x.cols() {
            return Err(Error::shape(
                "DomainDataset dimensions",
                source_x.cols(),
                target_x.cols(),
            ));
        }
        if !source_x.is_finite() || !target_x.is_finite() {
            return Err(Error::NonFinite("DomainDataset samples"));
        }
        if let Some(&bad) = source_y.iter().chain(&target_y_hidden).find(|&&y| y >= classes) {
            return Err(Error::Parameter(format!("label {bad} not below class count {classes}")));
        }
        let mut distinct = source_y.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::Parameter("source labels must cover at least two classes".into()));
        }
        Ok(DomainDataset {
            source_x,
            source_y,
            target_x,
            target_y_hidden,
            classes,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.source_x.cols()
    }

    pub fn source_len(&self) -> usize {
        self.source_x.rows()
    }

    pub fn target_len(&self) -> usize {
        self.target_x.rows()
    }

    pub(crate) fn target_labels(&self) -> &[usize] {
        &self.target_y_hidden
    }

    /// Per-class sample counts `(source, target)`.
    pub fn class_counts(&self) -> (Vec<usize>, Vec<usize>) {
        let count = |ys: &[usize]| {
            let mut c = vec![0; self.classes];
            ys.iter().for_each(|&y| c[y] += 1);
            c
        };
        (count(&self.source_y), count(&self.target_y_hidden))
    }

    /// CSV dump with header `domain,class,x0,x1,...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("domain,class");
        for c in 0..self.dim() {
            header.push_str(&format!(",x{c}"));
        }
        writeln!(w, "{header}")?;
        let domains = [
            ("source", &self.source_x, &self.source_y),
            ("target", &self.target_x, &self.target_y_hidden),
        ];
        for (name, x, y) in domains {
            for (row, label) in x.iter_rows().zip(y.iter()) {
                let mut line = format!("{name},{label}");
                for v in row {
                    line.push_str(&format!(",{v}"));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_checks() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(DomainDataset::new(x.clone(), vec![0, 1], x.clone(), vec![1, 0], 2).is_ok());
        assert!(DomainDataset::new(x.clone(), vec![0, 0], x.clone(), vec![1, 0], 2).is_err());
        assert!(DomainDataset::new(x.clone(), vec![0, 2], x.clone(), vec![1, 0], 2).is_err());
        assert!(DomainDataset::new(x.clone(), vec![0], x.clone(), vec![1, 0], 2).is_err());
        let mut bad = x.clone();
        bad[(0, 0)] = f64::INFINITY;
        assert!(DomainDataset::new(x, vec![0, 1], bad, vec![1, 0], 2).is_err());
    }

    #[test]
    fn csv_dump() {
        let s = Matrix::from_rows(&[[0.5, 1.0], [2.0, -1.0]]).unwrap();
        let t = Matrix::from_rows(&[[3.0, 0.25]]).unwrap();
        let ds = DomainDataset::new(s, vec![0, 1], t, vec![1], 2).unwrap();
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "domain,class,x0,x1\nsource,0,0.5,1\nsource,1,2,-1\ntarget,1,3,0.25\n"
        );
    }
}
