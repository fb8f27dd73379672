//! Central finite-difference checks for analytic gradients.

use rand::seq::index::sample;

use crate::diffnet::network::{GradientSet, Network};
use crate::seed;

/// Coordinates checked when a network has more parameters than this.
pub const DEFAULT_MAX_COORDS: usize = 96;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

fn coordinates(total: usize, max_coords: usize, seed: u64) -> Vec<usize> {
    if total <= max_coords {
        (0..total).collect()
    } else {
        let mut picked = sample(&mut seed::rng(seed), total, max_coords).into_vec();
        picked.sort_unstable();
        picked
    }
}

/// Worst relative error between `grads` and central differences of
/// `loss_fn` over a deterministic sample of parameter coordinates.
pub fn finite_diff_check<F>(net: &Network, loss_fn: F, grads: &GradientSet, h: f64) -> f64
where
    F: Fn(&Network) -> f64,
{
    finite_diff_check_sampled(net, loss_fn, grads, h, DEFAULT_MAX_COORDS, 0)
}

pub fn finite_diff_check_sampled<F>(
    net: &Network,
    loss_fn: F,
    grads: &GradientSet,
    h: f64,
    max_coords: usize,
    sample_seed: u64,
) -> f64
where
    F: Fn(&Network) -> f64,
{
    assert!(h > 0.0 && h <= 1e-3, "step {h} outside (0, 1e-3]");
    assert_eq!(grads.len(), net.param_count(), "gradient layout differs from network");
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in coordinates(net.param_count(), max_coords, sample_seed) {
        let orig = probe.param(i);
        *probe.param_mut(i) = orig + h;
        let up = loss_fn(&probe);
        *probe.param_mut(i) = orig - h;
        let down = loss_fn(&probe);
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(grads.get(i), numeric));
    }
    worst
}

/// Same check for a gradient with respect to a flat value vector, e.g.
/// a feature matrix.
pub fn finite_diff_check_values<F>(values: &[f64], loss_fn: F, analytic: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0 && h <= 1e-3, "step {h} outside (0, 1e-3]");
    assert_eq!(values.len(), analytic.len());
    let mut probe = values.to_vec();
    let mut worst = 0.0f64;
    for i in 0..values.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss_fn(&probe);
        probe[i] = orig - h;
        let down = loss_fn(&probe);
        probe[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    worst
}
