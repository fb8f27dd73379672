use serde::{Deserialize, Serialize};

use super::schedule::{alpha_exp_ramp, alpha_logistic, AlphaSchedule, LambdaSchedule};
use crate::diffnet::{Activation, FeatureTap, NetworkSpec};
use crate::error::{Error, Result};
use crate::losses::Metric;
use crate::teacher::{TeacherMode, DEFAULT_DECAY};

/// Switches for ablation runs. All off is the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Drop the discriminative clustering loss.
    pub no_lc: bool,
    /// Drop the cluster alignment loss.
    pub no_la: bool,
    /// Select every target sample for adversarial alignment (threshold 0).
    pub no_threshold: bool,
    /// Label targets with the student's own current predictions.
    pub no_teacher: bool,
    /// Keep α at 0 for the whole run: adversarial alignment only.
    pub marginal_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_iters: usize,
    pub pretrain_iters: usize,
    pub batch_source: usize,
    pub batch_target: usize,
    /// Margin of the clustering loss, in units of `metric`.
    pub m: f64,
    pub metric: Metric,
    /// Confidence threshold for adversarial selection.
    pub p: f64,
    pub alpha_schedule: AlphaSchedule,
    pub alpha_max: f64,
    /// Length of the exponential ramp, used by `exp_ramp`.
    pub ramp_length: usize,
    pub lambda_schedule: LambdaSchedule,
    pub lambda_max: f64,
    pub lr_base: f64,
    pub momentum: f64,
    pub teacher_mode: TeacherMode,
    pub decay: f64,
    pub seed: u64,
    pub critic_hidden: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
    /// `None` picks logits for two classes and the last hidden layer otherwise.
    pub feature_tap: Option<FeatureTap>,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_iters: 5000,
            pretrain_iters: 500,
            batch_source: 64,
            batch_target: 64,
            m: 3.0,
            metric: Metric::SqEuclidean,
            p: 0.9,
            alpha_schedule: AlphaSchedule::Logistic,
            alpha_max: 1.0,
            ramp_length: 1000,
            lambda_schedule: LambdaSchedule::SameAsAlpha,
            lambda_max: 1.0,
            lr_base: 0.01,
            momentum: 0.9,
            teacher_mode: TeacherMode::Temporal,
            decay: DEFAULT_DECAY,
            seed: 0,
            critic_hidden: 16,
            hidden: vec![32, 32],
            activation: Activation::Relu,
            dropout: 0.1,
            feature_tap: None,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.total_iters == 0 {
            return fail("total_iters must be positive".into());
        }
        if self.pretrain_iters > self.total_iters {
            return fail(format!(
                "pretrain_iters ({}) exceeds total_iters ({})",
                self.pretrain_iters, self.total_iters
            ));
        }
        if self.batch_source == 0 || self.batch_target == 0 {
            return fail("batch sizes must be positive".into());
        }
        if !self.m.is_finite() || self.m <= 0.0 {
            return fail(format!("m must be positive, got {}", self.m));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return fail(format!("p must lie in [0, 1], got {}", self.p));
        }
        if self.alpha_max.is_nan() || self.alpha_max < 0.0 || self.lambda_max.is_nan() || self.lambda_max < 0.0 {
            return fail("alpha_max and lambda_max must be nonnegative".into());
        }
        if self.alpha_schedule == AlphaSchedule::ExpRamp && self.ramp_length == 0 {
            return fail("ramp_length must be positive for exp_ramp".into());
        }
        if self.lr_base.is_nan() || self.lr_base <= 0.0 {
            return fail(format!("lr_base must be positive, got {}", self.lr_base));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return fail(format!("decay must lie in [0, 1), got {}", self.decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.critic_hidden == 0 || self.hidden.contains(&0) {
            return fail("layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn student_spec(&self, input_dim: usize, classes: usize) -> NetworkSpec {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(classes);
        let mut spec = NetworkSpec::classifier(sizes, self.activation, self.dropout);
        if let Some(tap) = self.feature_tap {
            spec.feature_tap = tap;
        }
        spec
    }

    /// Confidence threshold actually applied.
    pub fn threshold(&self) -> f64 {
        if self.ablation.no_threshold {
            0.0
        } else {
            self.p
        }
    }

    /// Shape of the ramp in [0, 1] at `iteration`; 0 during pretraining.
    fn ramp(&self, iteration: usize, schedule: AlphaSchedule) -> f64 {
        if iteration < self.pretrain_iters {
            return 0.0;
        }
        match schedule {
            AlphaSchedule::Logistic => {
                let span = (self.total_iters - self.pretrain_iters).max(1) as f64;
                alpha_logistic(((iteration - self.pretrain_iters) as f64 / span).min(1.0))
            }
            AlphaSchedule::ExpRamp => alpha_exp_ramp(iteration, self.pretrain_iters, self.ramp_length),
            AlphaSchedule::Constant => 1.0,
        }
    }

    /// `(α, λ)` at `iteration`. Both are exactly 0 during pretraining.
    pub fn weights_at(&self, iteration: usize) -> (f64, f64) {
        let alpha = if self.ablation.marginal_only {
            0.0
        } else {
            self.alpha_max * self.ramp(iteration, self.alpha_schedule)
        };
        let lambda = match self.lambda_schedule {
            LambdaSchedule::SameAsAlpha => self.lambda_max * self.ramp(iteration, self.alpha_schedule),
            LambdaSchedule::Constant => self.lambda_max * self.ramp(iteration, AlphaSchedule::Constant),
        };
        (alpha, lambda)
    }
}
