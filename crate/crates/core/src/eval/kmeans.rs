use rand::Rng;

use crate::matrix::Matrix;
use crate::seed;

pub const DEFAULT_RESTARTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after each assignment step of the kept run.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid (ties to the smaller index) and its squared distance.
fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter_rows().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first center uniform, the rest proportional to the
/// squared distance to the closest chosen center.
fn seed_centroids(points: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            // Every point coincides with a chosen center.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points.iter_rows()) {
            *d = d.min(sq_dist(p, points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// One Lloyd run. Stops when assignments no longer change or after
/// `max_iters` assignment steps.
pub fn kmeans_single(points: &Matrix, k: usize, seed: u64, max_iters: usize) -> KMeans {
    let n = points.rows();
    assert!(k >= 1 && k <= n, "k = {k} must be in 1..={n}");
    let dim = points.cols();
    let mut rng = seed::rng(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter_rows().enumerate() {
            let (c, d) = nearest(p, &centroids);
            inertia += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        if let Some(&prev) = history.last() {
            debug_assert!(
                inertia <= prev * (1.0 + 1e-12) + 1e-12,
                "inertia rose from {prev} to {inertia}"
            );
        }
        history.push(inertia);
        if !changed {
            break;
        }

        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter_rows().zip(&assignments) {
            counts[c] += 1;
            sums.row_mut(c).iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut taken = vec![false; n];
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                // Re-seed an empty cluster at the point farthest from its center.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centroids.row(assignments[a]));
                        let db = sq_dist(points.row(b), centroids.row(assignments[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("k <= n leaves a free point");
                taken[far] = true;
                let p = points.row(far).to_vec();
                centroids.row_mut(c).copy_from_slice(&p);
            }
        }
    }
    let inertia = *history.last().expect("at least one step");
    KMeans {
        assignments,
        centroids,
        inertia,
        inertia_history: history,
    }
}

/// Best of `restarts` runs by inertia, each seeded from `seed`.
pub fn kmeans_restarts(points: &Matrix, k: usize, seed: u64, max_iters: usize, restarts: usize) -> KMeans {
    (0..restarts.max(1) as u64)
        .map(|r| kmeans_single(points, k, seed::derive(seed, seed::stream::KMEANS, r), max_iters))
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart")
}

/// k-means with the default number of restarts. Returns the assignments.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iters: usize) -> Vec<usize> {
    kmeans_restarts(points, k, seed, max_iters, DEFAULT_RESTARTS).assignments
}
