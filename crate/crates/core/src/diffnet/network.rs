use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Which activations are exposed as the feature vector f(x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTap {
    /// Output of the last hidden layer (after dropout in train mode).
    Penultimate,
    /// Pre-softmax outputs of the final layer.
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// K ≥ 2 class probabilities.
    Softmax,
    /// One output per row, squashed to (0, 1). Used by the domain critic.
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Where an upstream gradient enters the network during backprop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    Probabilities,
    Logits,
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub feature_tap: FeatureTap,
    pub head: OutputHead,
}

impl NetworkSpec {
    /// A softmax classifier. Two-class problems tap the logits as features,
    /// anything larger taps the last hidden layer.
    pub fn classifier(layer_sizes: Vec<usize>, activation: Activation, dropout_rate: f64) -> Self {
        let k = layer_sizes.last().copied().unwrap_or(0);
        let feature_tap = if k == 2 || layer_sizes.len() < 3 {
            FeatureTap::Logits
        } else {
            FeatureTap::Penultimate
        };
        NetworkSpec {
            layer_sizes,
            activation,
            dropout_rate,
            feature_tap,
            head: OutputHead::Softmax,
        }
    }

    /// `input → hidden → hidden → 1` with a sigmoid output and no dropout.
    pub fn critic(input_dim: usize, hidden: usize) -> Self {
        NetworkSpec {
            layer_sizes: vec![input_dim, hidden, hidden, 1],
            activation: Activation::Relu,
            dropout_rate: 0.0,
            feature_tap: FeatureTap::Logits,
            head: OutputHead::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Parameter("a network needs at least two layer sizes".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Parameter("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        let out = self.output_dim();
        match self.head {
            OutputHead::Softmax if out < 2 => {
                return Err(Error::Parameter("softmax head needs at least 2 classes".into()))
            }
            OutputHead::Sigmoid if out != 1 => {
                return Err(Error::Parameter("sigmoid head has exactly one output".into()))
            }
            _ => {}
        }
        if self.feature_tap == FeatureTap::Penultimate && self.layer_sizes.len() < 3 {
            return Err(Error::Parameter("penultimate features need a hidden layer".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn feature_dim(&self) -> usize {
        match self.feature_tap {
            FeatureTap::Logits => self.output_dim(),
            FeatureTap::Penultimate => self.layer_sizes[self.layer_sizes.len() - 2],
        }
    }
}

/// Weights are stored `fan_in × fan_out`, so a layer computes `x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    fn len(&self) -> usize {
        self.weights.values().len() + self.bias.len()
    }

    fn get(&self, i: usize) -> f64 {
        let w = self.weights.values().len();
        if i < w {
            self.weights.values()[i]
        } else {
            self.bias[i - w]
        }
    }

    fn get_mut(&mut self, i: usize) -> &mut f64 {
        let w = self.weights.values().len();
        if i < w {
            &mut self.weights.values_mut()[i]
        } else {
            &mut self.bias[i - w]
        }
    }
}

/// Per-layer parameter gradients, congruent with a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Layer>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
        }
    }

    fn check_congruent(&self, other: &GradientSet) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape() && a.bias.len() == b.bias.len());
        if same {
            Ok(())
        } else {
            Err(Error::shape("GradientSet", "congruent layers", "different layout"))
        }
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &GradientSet) -> Result<()> {
        self.check_congruent(other)?;
        for (s, o) in self.layers.iter_mut().zip(&other.layers) {
            s.weights.axpy(a, &o.weights)?;
            for (x, y) in s.bias.iter_mut().zip(&o.bias) {
                *x += a * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights.values_mut().iter_mut().for_each(|v| *v *= c);
            l.bias.iter_mut().for_each(|v| *v *= c);
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat coordinate access in the same order as [`Network::param`].
    pub fn get(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.len() {
                return l.get(i);
            }
            i -= l.len();
        }
        panic!("gradient coordinate out of range")
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.values().iter().chain(&l.bias).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().map(f64::abs).fold(0.0, f64::max)
    }
}

/// Everything recorded by a forward pass that backprop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input to each linear layer; `layer_inputs[0]` is the batch itself.
    pub layer_inputs: Vec<Matrix>,
    /// Pre-activation output of each linear layer.
    pub pre_activations: Vec<Matrix>,
    /// Inverted-dropout masks per hidden layer, `None` when dropout was off.
    pub masks: Vec<Option<Matrix>>,
    pub features: Matrix,
    pub probabilities: Matrix,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Matrix {
        self.pre_activations.last().expect("at least one layer")
    }

    pub fn batch_size(&self) -> usize {
        self.layer_inputs[0].rows()
    }
}

/// Result of a backward pass: parameter gradients plus the gradient with
/// respect to the network input.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: GradientSet,
    pub d_input: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    seed: u64,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in layer.weights.values_mut() {
                    *v = rng.random_range(-s..=s);
                }
                layer
            })
            .collect();
        Ok(Network { spec, layers, seed })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Network { spec, layers, seed: 0 })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn param(&self, i: usize) -> f64 {
        *self.locate(i).0
    }

    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.len() {
                return l.get_mut(i);
            }
            i -= l.len();
        }
        panic!("parameter coordinate out of range")
    }

    fn locate(&self, mut i: usize) -> (&f64, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.len() {
                let w = l.weights.values().len();
                let v = if i < w { &l.weights.values()[i] } else { &l.bias[i - w] };
                return (v, li);
            }
            i -= l.len();
        }
        panic!("parameter coordinate out of range")
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn forward(&self, x: &Matrix, mode: Mode, noise_seed: u64) -> Result<ForwardTrace> {
        x.expect_shape("forward input", x.rows(), self.spec.input_dim())?;
        if !x.is_finite() {
            return Err(Error::NonFinite("forward input"));
        }
        let dropout = mode == Mode::Train && self.spec.dropout_rate > 0.0;
        let mut rng = seed::rng(noise_seed);
        let keep_scale = 1.0 / (1.0 - self.spec.dropout_rate);

        let n_layers = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers - 1);
        let mut a = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = a.matmul(&layer.weights)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            layer_inputs.push(a);
            if li + 1 < n_layers {
                let mut h = z.map(|v| self.spec.activation.apply(v));
                if dropout {
                    let mut mask = Matrix::zeros(h.rows(), h.cols());
                    for (m, v) in mask.values_mut().iter_mut().zip(h.values_mut()) {
                        *m = if rng.random::<f64>() < self.spec.dropout_rate {
                            0.0
                        } else {
                            keep_scale
                        };
                        *v *= *m;
                    }
                    masks.push(Some(mask));
                } else {
                    masks.push(None);
                }
                a = h;
            } else {
                a = z.clone();
            }
            pre_activations.push(z);
        }

        let logits = pre_activations.last().expect("at least one layer");
        let probabilities = match self.spec.head {
            OutputHead::Softmax => softmax_rows(logits),
            OutputHead::Sigmoid => logits.map(sigmoid),
        };
        let features = match self.spec.feature_tap {
            FeatureTap::Logits => logits.clone(),
            FeatureTap::Penultimate => layer_inputs[n_layers - 1].clone(),
        };
        Ok(ForwardTrace {
            layer_inputs,
            pre_activations,
            masks,
            features,
            probabilities,
        })
    }

    /// Eval-mode class probabilities.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x, Mode::Eval, 0)?.probabilities)
    }

    /// Parameter gradients for a single upstream gradient.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Matrix, entry: Entry) -> Result<GradientSet> {
        Ok(self.backward_multi(trace, &[(entry, upstream)])?.grads)
    }

    /// Backprop of a sum of upstream gradients entering at different points
    /// of the same trace. Reuses the trace's dropout masks.
    pub fn backward_multi(&self, trace: &ForwardTrace, upstreams: &[(Entry, &Matrix)]) -> Result<Backprop> {
        let n = trace.batch_size();
        let n_layers = self.layers.len();
        let k = self.spec.output_dim();
        let mut d_logits = Matrix::zeros(n, k);
        let mut d_penultimate: Option<Matrix> = None;

        for &(entry, g) in upstreams {
            match entry {
                Entry::Probabilities => {
                    g.expect_shape("backward d_probabilities", n, k)?;
                    let p = &trace.probabilities;
                    match self.spec.head {
                        OutputHead::Softmax => {
                            for r in 0..n {
                                let (pr, gr) = (p.row(r), g.row(r));
                                let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
                                for (j, d) in d_logits.row_mut(r).iter_mut().enumerate() {
                                    *d += pr[j] * (gr[j] - dot);
                                }
                            }
                        }
                        OutputHead::Sigmoid => {
                            for ((d, &pv), &gv) in d_logits.values_mut().iter_mut().zip(p.values()).zip(g.values()) {
                                *d += gv * pv * (1.0 - pv);
                            }
                        }
                    }
                }
                Entry::Logits => {
                    g.expect_shape("backward d_logits", n, k)?;
                    d_logits.add_assign(g)?;
                }
                Entry::Features => {
                    g.expect_shape("backward d_features", n, self.spec.feature_dim())?;
                    match self.spec.feature_tap {
                        FeatureTap::Logits => d_logits.add_assign(g)?,
                        FeatureTap::Penultimate => match &mut d_penultimate {
                            Some(d) => d.add_assign(g)?,
                            None => d_penultimate = Some(g.clone()),
                        },
                    }
                }
            }
        }

        let mut grads = GradientSet::zeros_like(self);
        let mut dz = d_logits;
        for li in (0..n_layers).rev() {
            let layer = &self.layers[li];
            let input = &trace.layer_inputs[li];
            grads.layers[li].weights = input.t_matmul(&dz)?;
            for r in 0..n {
                for (b, d) in grads.layers[li].bias.iter_mut().zip(dz.row(r)) {
                    *b += d;
                }
            }
            let mut da = dz.matmul_t(&layer.weights)?;
            if li == n_layers - 1 {
                if let Some(d) = &d_penultimate {
                    da.add_assign(d)?;
                }
            }
            if li == 0 {
                return Ok(Backprop { grads, d_input: da });
            }
            if let Some(mask) = &trace.masks[li - 1] {
                for (v, m) in da.values_mut().iter_mut().zip(mask.values()) {
                    *v *= m;
                }
            }
            let z_prev = &trace.pre_activations[li - 1];
            for (v, &z) in da.values_mut().iter_mut().zip(z_prev.values()) {
                *v *= self.spec.activation.derivative(z);
            }
            dz = da;
        }
        unreachable!("loop returns at the input layer")
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Gradient reversal on the path from the critic into the feature
/// extractor: the forward pass is the identity, the backward pass returns
/// `-lambda · g`.
pub fn reverse_gradient(g: &Matrix, lambda: f64) -> Matrix {
    debug_assert!(lambda >= 0.0, "reversal weight must be nonnegative");
    g.scale(-lambda)
}
