use crate::diffnet::network::{GradientSet, Network};
use crate::error::{Error, Result};

/// Classical momentum SGD state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    buffers: GradientSet,
    pub momentum: f64,
    pub base_lr: f64,
}

impl OptimizerState {
    pub fn new(net: &Network, momentum: f64, base_lr: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Parameter(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(OptimizerState {
            buffers: GradientSet::zeros_like(net),
            momentum,
            base_lr,
        })
    }

    pub fn with_defaults(net: &Network) -> Self {
        Self::new(net, 0.9, 0.01).expect("default momentum is valid")
    }

    pub fn buffers(&self) -> &GradientSet {
        &self.buffers
    }
}

/// `buffer ← momentum·buffer + grads; params ← params − lr·buffer`
pub fn sgd_step(net: &mut Network, state: &mut OptimizerState, grads: &GradientSet, lr: f64) -> Result<()> {
    if lr.is_nan() || lr <= 0.0 {
        return Err(Error::Parameter(format!("learning rate {lr} must be positive")));
    }
    state.buffers.scale(state.momentum);
    state.buffers.axpy(1.0, grads)?;
    for (layer, buf) in net.layers_mut().iter_mut().zip(&state.buffers.layers) {
        layer.weights.axpy(-lr, &buf.weights)?;
        for (p, b) in layer.bias.iter_mut().zip(&buf.bias) {
            *p -= lr * b;
        }
    }
    Ok(())
}
