//! The teacher classifier: an implicit ensemble of the student that labels
//! target samples.
//!
//! Two flavours are supported. The Π-model teacher is a second train-mode
//! forward pass with its own dropout noise. The temporal-ensemble teacher
//! keeps an exponentially decayed average of the student's past predictions
//! per target sample, read back with bias correction `1 / (1 - β^t)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diffnet::{Mode, Network};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_DECAY: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    Pi,
    Temporal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherState {
    mode: TeacherMode,
    ensemble: Matrix,
    step_counts: Vec<u32>,
    decay: f64,
}

/// Teacher labels for a set of target samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub labels: Vec<usize>,
    pub confidences: Vec<f64>,
    /// False for samples the temporal ensemble has never seen.
    pub seen: Vec<bool>,
}

impl PseudoLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl TeacherState {
    pub fn new(mode: TeacherMode, target_len: usize, classes: usize, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::Parameter(format!("teacher decay {decay} outside [0, 1)")));
        }
        let rows = if mode == TeacherMode::Temporal { target_len } else { 0 };
        Ok(TeacherState {
            mode,
            ensemble: Matrix::zeros(rows, classes),
            step_counts: vec![0; rows],
            decay,
        })
    }

    pub fn mode(&self) -> TeacherMode {
        self.mode
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn classes(&self) -> usize {
        self.ensemble.cols()
    }

    pub fn step_counts(&self) -> &[u32] {
        &self.step_counts
    }

    /// Raw, uncorrected accumulator.
    pub fn raw_ensemble(&self) -> &Matrix {
        &self.ensemble
    }

    /// `ensemble_i ← β·ensemble_i + (1 − β)·p_i` for each listed sample.
    pub fn temporal_update(&mut self, indices: &[usize], probabilities: &Matrix) -> Result<()> {
        if self.mode != TeacherMode::Temporal {
            return Err(Error::Parameter("temporal_update on a Π-model teacher".into()));
        }
        probabilities.expect_shape("temporal_update", indices.len(), self.classes())?;
        let len = self.step_counts.len();
        if let Some(&index) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::Index { index, len });
        }
        let b = self.decay;
        for (row, &i) in indices.iter().enumerate() {
            for (e, &p) in self.ensemble.row_mut(i).iter_mut().zip(probabilities.row(row)) {
                *e = b * *e + (1.0 - b) * p;
            }
            self.step_counts[i] += 1;
        }
        Ok(())
    }

    /// Bias-corrected ensemble rows; never-updated samples read as zeros.
    pub fn corrected(&self, indices: &[usize]) -> Result<Matrix> {
        if self.mode != TeacherMode::Temporal {
            return Err(Error::Parameter("the Π-model teacher keeps no ensemble".into()));
        }
        let len = self.step_counts.len();
        let mut out = Matrix::zeros(indices.len(), self.classes());
        for (row, &i) in indices.iter().enumerate() {
            if i >= len {
                return Err(Error::Index { index: i, len });
            }
            let t = self.step_counts[i];
            if t == 0 {
                continue;
            }
            let c = 1.0 / (1.0 - self.decay.powi(t as i32));
            for (o, e) in out.row_mut(row).iter_mut().zip(self.ensemble.row(i)) {
                *o = c * e;
            }
        }
        Ok(out)
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.step_counts.len()).collect()
    }

    /// Temporal-mode pseudo labels with the unseen flag set from the counts.
    pub fn pseudo_labels(&self, indices: &[usize]) -> Result<PseudoLabels> {
        let mut out = pseudo_labels(&self.corrected(indices)?);
        for (k, &i) in indices.iter().enumerate() {
            if self.step_counts[i] == 0 {
                out.seen[k] = false;
                out.labels[k] = 0;
                out.confidences[k] = 0.0;
            }
        }
        Ok(out)
    }

    /// CSV dump: `index,p0,..,p{K-1},confidence` with corrected probabilities.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let k = self.classes();
        let mut header = String::from("index");
        for c in 0..k {
            header.push_str(&format!(",p{c}"));
        }
        header.push_str(",confidence");
        writeln!(w, "{header}")?;
        let all = self.all_indices();
        let probs = self.corrected(&all)?;
        let labels = self.pseudo_labels(&all)?;
        for i in all {
            let mut line = i.to_string();
            for p in probs.row(i) {
                line.push_str(&format!(",{p}"));
            }
            line.push_str(&format!(",{}", labels.confidences[i]));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Π-model teacher: an independent train-mode pass with its own noise seed.
/// Its output is treated as a constant; no gradient flows through it.
pub fn pi_predict(net: &Network, target_x: &Matrix, noise_seed: u64) -> Result<Matrix> {
    Ok(net.forward(target_x, Mode::Train, noise_seed)?.probabilities)
}

/// Argmax labels (ties to the smallest class id) and max-probability
/// confidences. An all-zero row is reported as unseen with label 0 and
/// confidence 0.
pub fn pseudo_labels(probabilities: &Matrix) -> PseudoLabels {
    let n = probabilities.rows();
    let mut labels = Vec::with_capacity(n);
    let mut confidences = Vec::with_capacity(n);
    let mut seen = Vec::with_capacity(n);
    for row in probabilities.iter_rows() {
        let (label, conf) = argmax(row);
        labels.push(label);
        confidences.push(conf.clamp(0.0, 1.0));
        seen.push(row.iter().any(|&p| p != 0.0));
    }
    PseudoLabels {
        labels,
        confidences,
        seen,
    }
}

/// Index and value of the first maximum.
pub fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    (best, row.get(best).copied().unwrap_or(0.0))
}
