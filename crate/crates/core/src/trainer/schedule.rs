use serde::{Deserialize, Serialize};

/// `2 / (1 + exp(-10 t)) - 1` for `t` in [0, 1].
pub fn alpha_logistic(t: f64) -> f64 {
    2.0 / (1.0 + (-10.0 * t).exp()) - 1.0
}

/// 0 before `start`, then `exp(-10 (1 - min((ite - start) / length, 1)))`.
pub fn alpha_exp_ramp(ite: usize, start: usize, length: usize) -> f64 {
    assert!(length > 0, "ramp length must be positive");
    if ite < start {
        return 0.0;
    }
    let progress = ((ite - start) as f64 / length as f64).min(1.0);
    (-10.0 * (1.0 - progress)).exp()
}

/// Annealed learning rate `base / (1 + 10 p)^0.75`.
pub fn lr_schedule(progress: f64, base: f64) -> f64 {
    base / (1.0 + 10.0 * progress).powf(0.75)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSchedule {
    Logistic,
    ExpRamp,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSchedule {
    SameAsAlpha,
    Constant,
}
