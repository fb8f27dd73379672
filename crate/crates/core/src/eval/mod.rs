//! Evaluation and monitoring: classification accuracy, k-means clustering
//! accuracy, the Jensen-Shannon proxy and the selection rate.
//!
//! This is the only module that reads the hidden target labels of a
//! [`DomainDataset`].

mod kmeans;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, kmeans_restarts, kmeans_single, KMeans, DEFAULT_RESTARTS};

use crate::datasets::DomainDataset;
use crate::diffnet::Network;
use crate::error::{Error, Result};
use crate::losses::is_selected;
use crate::matrix::Matrix;
use crate::teacher::argmax;

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub iteration: usize,
    pub target_accuracy: f64,
    pub source_accuracy: f64,
    pub clustering_accuracy: f64,
    /// From the all-selected adversarial loss.
    pub jsd_proxy: f64,
    pub selection_rate: f64,
    pub l_y: f64,
    pub l_c: f64,
    pub l_a: f64,
    /// Adversarial loss with the current confidence selection.
    pub l_d: f64,
}

impl RunMetrics {
    pub const CSV_HEADER: &'static str =
        "iteration,target_acc,source_acc,cluster_acc,jsd_proxy,selection_rate,l_y,l_c,l_a,l_d";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.target_accuracy,
            self.source_accuracy,
            self.clustering_accuracy,
            self.jsd_proxy,
            self.selection_rate,
            self.l_y,
            self.l_c,
            self.l_a,
            self.l_d
        )
    }
}

pub fn predicted_labels(probabilities: &Matrix) -> Vec<usize> {
    probabilities.iter_rows().map(|r| argmax(r).0).collect()
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy_of(probabilities: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted_labels(probabilities)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Eval-mode accuracy of `net` on `(x, y)`.
pub fn accuracy(net: &Network, x: &Matrix, y: &[usize]) -> Result<f64> {
    if x.rows() != y.len() {
        return Err(Error::shape("accuracy labels", x.rows(), y.len()));
    }
    Ok(accuracy_of(&net.predict(x)?, y))
}

pub fn target_accuracy(net: &Network, ds: &DomainDataset) -> Result<f64> {
    accuracy(net, &ds.target_x, ds.target_labels())
}

pub fn source_accuracy(net: &Network, ds: &DomainDataset) -> Result<f64> {
    accuracy(net, &ds.source_x, &ds.source_y)
}

/// Ground-truth target labels, for evaluation and export only.
pub fn hidden_target_labels(ds: &DomainDataset) -> &[usize] {
    ds.target_labels()
}

/// Labels each cluster by its most frequent true label (ties to the smaller
/// label) and returns the fraction of points matching their cluster's label.
pub fn cluster_accuracy(assignments: &[usize], true_labels: &[usize]) -> f64 {
    assert_eq!(assignments.len(), true_labels.len());
    if assignments.is_empty() {
        return 0.0;
    }
    let clusters = assignments.iter().max().map_or(0, |m| m + 1);
    let classes = true_labels.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; classes]; clusters];
    for (&c, &y) in assignments.iter().zip(true_labels) {
        table[c][y] += 1;
    }
    // The majority count is what matters; its label's tie-break does not
    // change the total.
    let hits: usize = table.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    hits as f64 / assignments.len() as f64
}

/// Majority true label of each cluster, ties to the smaller label.
pub fn cluster_labels(assignments: &[usize], true_labels: &[usize]) -> Vec<usize> {
    let clusters = assignments.iter().max().map_or(0, |m| m + 1);
    let classes = true_labels.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0f64; classes]; clusters];
    for (&c, &y) in assignments.iter().zip(true_labels) {
        table[c][y] += 1.0;
    }
    table.iter().map(|row| argmax(row).0).collect()
}

/// Clustering accuracy of source and target features pooled together,
/// with `k` equal to the number of classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub combined: f64,
    pub source: f64,
    pub target: f64,
}

pub fn combined_cluster_accuracy(
    source_features: &Matrix,
    target_features: &Matrix,
    ds: &DomainDataset,
    seed: u64,
) -> Result<ClusterReport> {
    let all = source_features.vstack(target_features)?;
    let mut labels = ds.source_y.clone();
    labels.extend_from_slice(ds.target_labels());
    let k = ds.classes().min(all.rows());
    let a = kmeans(&all, k, seed, 300);
    let (sa, ta) = a.split_at(source_features.rows());
    Ok(ClusterReport {
        combined: cluster_accuracy(&a, &labels),
        source: cluster_accuracy(sa, &ds.source_y),
        target: cluster_accuracy(ta, ds.target_labels()),
    })
}

/// `½·L_d + ln 2`, a lower-bound estimate of the Jensen-Shannon divergence
/// between the two feature distributions.
pub fn jsd_proxy(l_d: f64) -> f64 {
    0.5 * l_d + std::f64::consts::LN_2
}

/// Fraction of confidences strictly above `p`.
pub fn selection_rate(confidences: &[f64], p: f64) -> f64 {
    if confidences.is_empty() {
        return 0.0;
    }
    confidences.iter().filter(|&&c| is_selected(c, p)).count() as f64 / confidences.len() as f64
}
