use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DomainDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Two Gaussian classes with opposite imbalance in the two domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImbalancedParams {
    pub n_major: usize,
    pub n_minor: usize,
    /// Class 0 and class 1 means in the source domain.
    pub source_means: [[f64; 2]; 2],
    /// Class 0 and class 1 means in the target domain.
    pub target_means: [[f64; 2]; 2],
    pub sigma: f64,
}

impl Default for ImbalancedParams {
    fn default() -> Self {
        ImbalancedParams {
            n_major: 1000,
            n_minor: 100,
            source_means: [[-2.0, 0.0], [2.0, 0.0]],
            target_means: [[-2.0, 2.0], [2.0, 2.0]],
            sigma: 0.35,
        }
    }
}

impl ImbalancedParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_major == 0 || self.n_minor == 0 {
            return Err(Error::Parameter("class counts must be at least 1".into()));
        }
        check_sigma(self.sigma)
    }
}

/// Several spatial modes per class in the source; the target rotates every
/// mode about the origin and adds one displaced mode per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultimodeParams {
    pub classes: usize,
    pub modes_per_class: usize,
    pub rotation_deg: f64,
    pub n_per_mode: usize,
    pub sigma: f64,
    /// Radius of the ring the source modes sit on.
    pub radius: f64,
    pub extra_mode: bool,
    /// Radius of the extra target modes.
    pub extra_radius: f64,
    /// Angular offset of each class's extra mode from its first rotated mode.
    pub extra_offset_deg: f64,
    /// Samples in each extra target mode.
    pub extra_n: usize,
}

impl Default for MultimodeParams {
    fn default() -> Self {
        MultimodeParams {
            classes: 2,
            modes_per_class: 2,
            rotation_deg: 40.0,
            n_per_mode: 100,
            sigma: 0.35,
            radius: 3.0,
            extra_mode: true,
            extra_radius: 5.0,
            extra_offset_deg: 0.0,
            extra_n: 800,
        }
    }
}

impl MultimodeParams {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Parameter("multimode needs at least two classes".into()));
        }
        if self.modes_per_class < 2 {
            return Err(Error::Parameter("modes_per_class must be at least 2".into()));
        }
        if self.n_per_mode == 0 {
            return Err(Error::Parameter("n_per_mode must be at least 1".into()));
        }
        if !self.rotation_deg.is_finite()
            || self.radius.is_nan()
            || self.radius <= 0.0
            || self.extra_radius.is_nan()
            || self.extra_radius <= 0.0
        {
            return Err(Error::Parameter(
                "rotation and radii must be finite, radii positive".into(),
            ));
        }
        check_sigma(self.sigma)
    }

    /// Mode `j` of the ring sits at angle `2πj / (classes·modes)` and belongs
    /// to class `j mod classes`, so neighbouring modes differ in class.
    fn source_modes(&self) -> Vec<([f64; 2], usize)> {
        let total = self.classes * self.modes_per_class;
        (0..total)
            .map(|j| {
                let a = std::f64::consts::TAU * j as f64 / total as f64;
                ([self.radius * a.cos(), self.radius * a.sin()], j % self.classes)
            })
            .collect()
    }

    fn target_modes(&self) -> Vec<([f64; 2], usize)> {
        let rot = self.rotation_deg.to_radians();
        let mut modes: Vec<_> = self
            .source_modes()
            .into_iter()
            .map(|(c, k)| (rotate(c, rot), k))
            .collect();
        if self.extra_mode {
            let total = (self.classes * self.modes_per_class) as f64;
            for k in 0..self.classes {
                let a = std::f64::consts::TAU * k as f64 / total + rot + self.extra_offset_deg.to_radians();
                modes.push(([self.extra_radius * a.cos(), self.extra_radius * a.sin()], k));
            }
        }
        modes
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("sigma must be positive, got {sigma}")))
    }
}

fn rotate([x, y]: [f64; 2], a: f64) -> [f64; 2] {
    let (s, c) = a.sin_cos();
    [c * x - s * y, s * x + c * y]
}

/// Draws `counts[i]` isotropic samples around `centers[i]`.
fn sample_blobs(centers: &[([f64; 2], usize)], counts: &[usize], sigma: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, sigma).expect("validated sigma");
    let total: usize = counts.iter().sum();
    let mut values = Vec::with_capacity(total * 2);
    let mut labels = Vec::with_capacity(total);
    for (&(center, class), &n) in centers.iter().zip(counts) {
        for _ in 0..n {
            values.push(center[0] + noise.sample(&mut rng));
            values.push(center[1] + noise.sample(&mut rng));
            labels.push(class);
        }
    }
    (Matrix::from_vec(total, 2, values).expect("sized above"), labels)
}

/// Source has `n_major` class-0 and `n_minor` class-1 samples; the target
/// has the reverse.
pub fn make_imbalanced_gaussians(params: &ImbalancedParams, seed: u64) -> Result<DomainDataset> {
    params.validate()?;
    let [s0, s1] = params.source_means;
    let [t0, t1] = params.target_means;
    let (sx, sy) = sample_blobs(
        &[(s0, 0), (s1, 1)],
        &[params.n_major, params.n_minor],
        params.sigma,
        seed::derive(seed, seed::stream::DATA, 0),
    );
    let (tx, ty) = sample_blobs(
        &[(t0, 0), (t1, 1)],
        &[params.n_minor, params.n_major],
        params.sigma,
        seed::derive(seed, seed::stream::DATA, 1),
    );
    DomainDataset::new(sx, sy, tx, ty, 2)
}

pub fn make_multimode_domains(params: &MultimodeParams, seed: u64) -> Result<DomainDataset> {
    params.validate()?;
    let source = params.source_modes();
    let target = params.target_modes();
    let (sx, sy) = sample_blobs(
        &source,
        &vec![params.n_per_mode; source.len()],
        params.sigma,
        seed::derive(seed, seed::stream::DATA, 0),
    );
    let mut counts = vec![params.n_per_mode; params.classes * params.modes_per_class];
    counts.resize(target.len(), params.extra_n);
    let (tx, ty) = sample_blobs(
        &target,
        &counts,
        params.sigma,
        seed::derive(seed, seed::stream::DATA, 1),
    );
    DomainDataset::new(sx, sy, tx, ty, params.classes)
}
