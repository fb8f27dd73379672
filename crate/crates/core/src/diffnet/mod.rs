//! Small feedforward networks with exact reverse-mode gradients, inverted
//! dropout, gradient reversal and momentum SGD.

mod gradcheck;
mod network;
mod optim;

pub use gradcheck::{finite_diff_check, finite_diff_check_sampled, finite_diff_check_values, DEFAULT_MAX_COORDS};
pub use network::{
    reverse_gradient, sigmoid, softmax_rows, Activation, Backprop, Entry, FeatureTap, ForwardTrace, GradientSet, Layer,
    Mode, Network, NetworkSpec, OutputHead,
};
pub use optim::{sgd_step, OptimizerState};
