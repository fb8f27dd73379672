//! The four training losses and their gradients with respect to logits,
//! features or critic outputs.

use serde::{Deserialize, Serialize};

use crate::diffnet::GradientSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probabilities are clamped below at this value before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

/// Features with class labels (ground truth for source, teacher labels for
/// target) and per-sample confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeledBatch {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub confidences: Vec<f64>,
    pub classes: usize,
}

impl PseudoLabeledBatch {
    pub fn new(features: Matrix, labels: Vec<usize>, confidences: Vec<f64>, classes: usize) -> Result<Self> {
        if labels.len() != features.rows() || confidences.len() != features.rows() {
            return Err(Error::shape(
                "PseudoLabeledBatch",
                format!("{} labels and confidences", features.rows()),
                format!("{} labels, {} confidences", labels.len(), confidences.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Parameter(format!("label {bad} not below class count {classes}")));
        }
        Ok(PseudoLabeledBatch {
            features,
            labels,
            confidences,
            classes,
        })
    }

    /// A labeled source batch: every confidence is 1.
    pub fn labeled(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let n = labels.len();
        Self::new(features, labels, vec![1.0; n], classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Loss values and gradients of one training step.
#[derive(Debug, Clone)]
pub struct LossBundle {
    pub l_y: f64,
    pub l_c: f64,
    pub l_a: f64,
    pub l_d: f64,
    pub d_features_source: Matrix,
    pub d_features_target: Matrix,
    pub d_logits_source: Matrix,
    pub critic_grads: GradientSet,
    pub selection_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Gradient with respect to the pre-softmax logits.
    pub d_logits: Matrix,
    /// How many probabilities were clamped at [`LOG_CLAMP`].
    pub clamped: usize,
}

/// Mean negative log-likelihood of `labels` under row-wise probabilities.
pub fn cross_entropy(probabilities: &Matrix, labels: &[usize]) -> Result<CrossEntropy> {
    let (n, k) = probabilities.shape();
    if labels.len() != n {
        return Err(Error::shape("cross_entropy labels", n, labels.len()));
    }
    if n == 0 {
        return Ok(CrossEntropy {
            loss: 0.0,
            d_logits: Matrix::zeros(0, k),
            clamped: 0,
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut d_logits = probabilities.scale(inv_n);
    let mut loss = 0.0;
    let mut clamped = 0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::Parameter(format!("label {y} not below class count {k}")));
        }
        let p = probabilities[(i, y)];
        if p < LOG_CLAMP {
            clamped += 1;
        }
        loss -= p.max(LOG_CLAMP).ln();
        d_logits[(i, y)] -= inv_n;
    }
    Ok(CrossEntropy {
        loss: loss * inv_n,
        d_logits,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    SqEuclidean,
    Euclidean,
}

/// Discriminative clustering loss of one domain's batch.
///
/// Sums over all ordered pairs `(i, j)`, including `i = j`: same-label pairs
/// contribute `d(f_i, f_j)`, different-label pairs `max(0, m - d(f_i, f_j))`.
/// The sum is divided by `|X|²`. At the hinge (`d = m`) and, for the plain
/// Euclidean metric, at `f_i = f_j` the subgradient 0 is used.
pub fn clustering_loss(batch: &PseudoLabeledBatch, margin: f64, metric: Metric) -> (f64, Matrix) {
    let f = &batch.features;
    let (n, dim) = f.shape();
    let mut grad = Matrix::zeros(n, dim);
    if n == 0 {
        return (0.0, grad);
    }
    let norm = 1.0 / (n * n) as f64;
    let mut loss = 0.0;
    let mut diff = vec![0.0; dim];
    // Each unordered pair i < j stands for the two equal ordered terms.
    for i in 0..n {
        for j in (i + 1)..n {
            let (fi, fj) = (f.row(i), f.row(j));
            let mut sq = 0.0;
            for ((d, a), b) in diff.iter_mut().zip(fi).zip(fj) {
                *d = a - b;
                sq += *d * *d;
            }
            let (dist, d_dist_d_sq) = match metric {
                Metric::SqEuclidean => (sq, 1.0),
                Metric::Euclidean => {
                    let e = sq.sqrt();
                    (e, if e > 0.0 { 0.5 / e } else { 0.0 })
                }
            };
            // Coefficient of d(dist) in the pair term.
            let coef = if batch.labels[i] == batch.labels[j] {
                loss += dist;
                1.0
            } else if dist < margin {
                loss += margin - dist;
                -1.0
            } else {
                continue;
            };
            // Two ordered pairs, each contributing 2·diff·d_dist_d_sq to f_i.
            let s = 2.0 * norm * coef * d_dist_d_sq * 2.0;
            for (k, &d) in diff.iter().enumerate() {
                grad[(i, k)] += s * d;
                grad[(j, k)] -= s * d;
            }
        }
    }
    (2.0 * norm * loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub loss: f64,
    pub d_features_source: Matrix,
    pub d_features_target: Matrix,
    /// Classes present in both batches.
    pub present_classes: Vec<usize>,
}

fn class_means(batch: &PseudoLabeledBatch) -> (Matrix, Vec<usize>) {
    let dim = batch.features.cols();
    let mut sums = Matrix::zeros(batch.classes, dim);
    let mut counts = vec![0usize; batch.classes];
    for (row, &y) in batch.features.iter_rows().zip(&batch.labels) {
        counts[y] += 1;
        for (s, v) in sums.row_mut(y).iter_mut().zip(row) {
            *s += v;
        }
    }
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 {
            sums.row_mut(k).iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

/// Cluster alignment loss: mean over classes present in both batches of the
/// squared distance between per-class feature means. Classes missing from
/// either batch are dropped from the mean; with no shared class the loss is 0.
pub fn alignment_loss(source: &PseudoLabeledBatch, target: &PseudoLabeledBatch) -> Result<Alignment> {
    if source.classes != target.classes {
        return Err(Error::Parameter(format!(
            "class counts differ: source {}, target {}",
            source.classes, target.classes
        )));
    }
    if source.features.cols() != target.features.cols() {
        return Err(Error::shape(
            "alignment_loss features",
            source.features.cols(),
            target.features.cols(),
        ));
    }
    let (mean_s, count_s) = class_means(source);
    let (mean_t, count_t) = class_means(target);
    let present: Vec<usize> = (0..source.classes)
        .filter(|&k| count_s[k] > 0 && count_t[k] > 0)
        .collect();

    let dim = source.features.cols();
    let mut d_s = Matrix::zeros(source.len(), dim);
    let mut d_t = Matrix::zeros(target.len(), dim);
    if present.is_empty() {
        return Ok(Alignment {
            loss: 0.0,
            d_features_source: d_s,
            d_features_target: d_t,
            present_classes: present,
        });
    }
    let inv_p = 1.0 / present.len() as f64;
    let mut loss = 0.0;
    // Per-class gradient of the loss with respect to the source mean.
    let mut d_mean = Matrix::zeros(source.classes, dim);
    for &k in &present {
        for ((g, a), b) in d_mean.row_mut(k).iter_mut().zip(mean_s.row(k)).zip(mean_t.row(k)) {
            let diff = a - b;
            loss += diff * diff;
            *g = 2.0 * inv_p * diff;
        }
    }
    for (i, &y) in source.labels.iter().enumerate() {
        if count_t[y] > 0 {
            let c = 1.0 / count_s[y] as f64;
            for (g, m) in d_s.row_mut(i).iter_mut().zip(d_mean.row(y)) {
                *g = c * m;
            }
        }
    }
    for (i, &y) in target.labels.iter().enumerate() {
        if count_s[y] > 0 {
            let c = 1.0 / count_t[y] as f64;
            for (g, m) in d_t.row_mut(i).iter_mut().zip(d_mean.row(y)) {
                *g = -c * m;
            }
        }
    }
    Ok(Alignment {
        loss: loss * inv_p,
        d_features_source: d_s,
        d_features_target: d_t,
        present_classes: present,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adversarial {
    pub loss: f64,
    pub d_source: Vec<f64>,
    pub d_target: Vec<f64>,
    pub selection_count: usize,
}

/// Whether a target sample takes part in adversarial alignment.
pub fn is_selected(confidence: f64, threshold: f64) -> bool {
    confidence > threshold
}

/// Confidence-thresholded domain-adversarial log-likelihood
///
/// `(1/N) Σ log c_s + (1/M̃) Σ γ_i log(1 − c_t)`, with `γ_i = [conf_i > p]`
/// and `M̃` the number of selected target samples. The critic maximizes it;
/// the feature extractor minimizes it. Gradients are with respect to the
/// critic outputs, and are zero where an output was clamped.
pub fn domain_adversarial_loss(
    source_out: &[f64],
    target_out: &[f64],
    target_confidences: &[f64],
    threshold: f64,
) -> Result<Adversarial> {
    if target_out.len() != target_confidences.len() {
        return Err(Error::shape(
            "domain_adversarial_loss confidences",
            target_out.len(),
            target_confidences.len(),
        ));
    }
    let hi = 1.0 - LOG_CLAMP;
    let mut loss = 0.0;
    let mut d_source = vec![0.0; source_out.len()];
    if !source_out.is_empty() {
        let inv_n = 1.0 / source_out.len() as f64;
        for (d, &c) in d_source.iter_mut().zip(source_out) {
            let cc = c.clamp(LOG_CLAMP, hi);
            loss += inv_n * cc.ln();
            if cc == c {
                *d = inv_n / c;
            }
        }
    }
    let selection_count = target_confidences
        .iter()
        .filter(|&&c| is_selected(c, threshold))
        .count();
    let mut d_target = vec![0.0; target_out.len()];
    if selection_count > 0 {
        let inv_m = 1.0 / selection_count as f64;
        for ((d, &c), &conf) in d_target.iter_mut().zip(target_out).zip(target_confidences) {
            if !is_selected(conf, threshold) {
                continue;
            }
            let cc = c.clamp(LOG_CLAMP, hi);
            loss += inv_m * (1.0 - cc).ln();
            if cc == c {
                *d = -inv_m / (1.0 - c);
            }
        }
    }
    Ok(Adversarial {
        loss,
        d_source,
        d_target,
        selection_count,
    })
}

/// `L_y + α(L_c + L_a) + λ·L_d`, the objective minimized by the student.
pub fn total_objective(l_y: f64, l_c: f64, l_a: f64, l_d: f64, alpha: f64, lambda: f64) -> f64 {
    l_y + alpha * (l_c + l_a) + lambda * l_d
}
