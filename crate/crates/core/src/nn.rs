//! Dense feed-forward networks with activation capture, reverse-mode input
//! gradients and mini-batch training.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has length {got}, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gradient has a non-finite component at index {0}")]
    NonFiniteGradient(usize),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("layer {0} is not a hidden layer")]
    BadLayer(usize),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid training setup: {0}")]
    InvalidTraining(String),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, pre: &mut [f64]) {
        match self {
            Activation::Relu => pre.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => pre.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
            Activation::Identity => {}
            Activation::Softmax => {
                let max = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in pre.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                pre.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }

    /// Maps dJ/da onto dJ/dpre given the post-activation values `a`.
    fn backward(self, a: &[f64], upstream: &[f64], out: &mut [f64]) {
        match self {
            // Subgradient at 0 is 0.
            Activation::Relu => {
                for ((o, &ai), &g) in out.iter_mut().zip(a).zip(upstream) {
                    *o = if ai > 0.0 { g } else { 0.0 };
                }
            }
            Activation::Sigmoid => {
                for ((o, &ai), &g) in out.iter_mut().zip(a).zip(upstream) {
                    *o = g * ai * (1.0 - ai);
                }
            }
            Activation::Identity => out.copy_from_slice(upstream),
            Activation::Softmax => {
                let dot: f64 = a.iter().zip(upstream).map(|(ai, g)| ai * g).sum();
                for ((o, &ai), &g) in out.iter_mut().zip(a).zip(upstream) {
                    *o = ai * (g - dot);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self { width, activation }
    }

    pub fn relu(width: usize) -> Self {
        Self::new(width, Activation::Relu)
    }
}

/// One dense layer. `weights` is row-major with shape `width x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub width: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
}

impl Dense {
    pub fn zeros(inputs: usize, spec: LayerSpec) -> Self {
        Self {
            inputs,
            width: spec.width,
            activation: spec.activation,
            weights: vec![0.0; inputs * spec.width],
            biases: vec![0.0; spec.width],
            mask: None,
        }
    }

    fn glorot<R: Rng>(inputs: usize, spec: LayerSpec, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + spec.width) as f64).sqrt();
        let mut layer = Self::zeros(inputs, spec);
        for w in layer.weights.iter_mut() {
            *w = rng.gen_range(-limit..=limit);
        }
        layer
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.width, self.activation)
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            let s: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(s + b);
        }
        self.activation.apply(out);
        if let Some(mask) = &self.mask {
            for (v, &m) in out.iter_mut().zip(mask) {
                if m {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Activations of every layer (hidden layers followed by the output layer)
/// from a single forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub per_layer: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn output(&self) -> &[f64] {
        self.per_layer.last().expect("trace has at least one layer")
    }

    pub fn layer(&self, index: usize) -> &[f64] {
        &self.per_layer[index]
    }
}

/// A differentiable scalar function of a forward trace.
pub trait Objective {
    fn value(&self, trace: &ActivationTrace) -> f64;

    /// Adds dJ/da for each layer activation into `grads`, which holds one
    /// zeroed vector per layer.
    fn accumulate_gradient(&self, trace: &ActivationTrace, grads: &mut [Vec<f64>]);
}

/// Sum of the output layer's activations.
pub struct OutputSum;

impl Objective for OutputSum {
    fn value(&self, trace: &ActivationTrace) -> f64 {
        trace.output().iter().sum()
    }

    fn accumulate_gradient(&self, _trace: &ActivationTrace, grads: &mut [Vec<f64>]) {
        if let Some(last) = grads.last_mut() {
            last.iter_mut().for_each(|g| *g += 1.0);
        }
    }
}

/// Cross-entropy of the output distribution against a fixed class.
pub struct ClassCrossEntropy {
    pub class: usize,
}

impl Objective for ClassCrossEntropy {
    fn value(&self, trace: &ActivationTrace) -> f64 {
        -class_probability(trace.output(), self.class).max(PROB_FLOOR).ln()
    }

    fn accumulate_gradient(&self, trace: &ActivationTrace, grads: &mut [Vec<f64>]) {
        let out = trace.output();
        let last = grads.last_mut().expect("at least one layer");
        if out.len() == 1 {
            // Binary sigmoid head: p(class 1) = out[0].
            let p = out[0].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            last[0] += if self.class == 1 { -1.0 / p } else { 1.0 / (1.0 - p) };
        } else {
            let p = out[self.class];
            if p > PROB_FLOOR {
                last[self.class] -= 1.0 / p;
            }
        }
    }
}

const PROB_FLOOR: f64 = 1e-12;

fn class_probability(out: &[f64], class: usize) -> f64 {
    if out.len() == 1 {
        if class == 1 {
            out[0]
        } else {
            1.0 - out[0]
        }
    } else {
        out[class]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Dense>,
}

impl Network {
    /// Glorot-uniform initialised network.
    pub fn new(input_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        validate_specs(input_dim, specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = input_dim;
        let mut layers = Vec::with_capacity(specs.len());
        for &spec in specs {
            layers.push(Dense::glorot(inputs, spec, &mut rng));
            inputs = spec.width;
        }
        Ok(Self { input_dim, layers })
    }

    pub fn zeros(input_dim: usize, specs: &[LayerSpec]) -> Result<Self, NnError> {
        validate_specs(input_dim, specs)?;
        let mut inputs = input_dim;
        let layers = specs
            .iter()
            .map(|&spec| {
                let l = Dense::zeros(inputs, spec);
                inputs = spec.width;
                l
            })
            .collect();
        Ok(Self { input_dim, layers })
    }

    pub fn from_layers(input_dim: usize, layers: Vec<Dense>) -> Result<Self, NnError> {
        let net = Self { input_dim, layers };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let specs: Vec<_> = self.layers.iter().map(Dense::spec).collect();
        validate_specs(self.input_dim, &specs)?;
        let mut inputs = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs != inputs
                || l.weights.len() != l.inputs * l.width
                || l.biases.len() != l.width
            {
                return Err(NnError::InvalidNetwork(format!("layer {i} has inconsistent shapes")));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(NnError::InvalidNetwork(format!("layer {i} has non-finite weights")));
            }
            if let Some(mask) = &l.mask {
                if mask.len() != l.width {
                    return Err(NnError::InvalidNetwork(format!("layer {i} mask length")));
                }
            }
            inputs = l.width;
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Number of hidden layers (all but the output layer).
    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(|l| l.width).unwrap_or(0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<ActivationTrace, NnError> {
        if x.len() != self.input_dim {
            return Err(NnError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let mut per_layer: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = per_layer.last().map(Vec::as_slice).unwrap_or(x);
            let mut out = Vec::with_capacity(layer.width);
            layer.forward_into(input, &mut out);
            per_layer.push(out);
        }
        Ok(ActivationTrace { per_layer })
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut trace = self.forward(x)?;
        Ok(trace.per_layer.pop().unwrap_or_default())
    }

    /// Predicted class: argmax of the output (first index on ties), or
    /// `p > 0.5` for a width-1 sigmoid head.
    pub fn predict(&self, x: &[f64]) -> Result<usize, NnError> {
        Ok(label_of(&self.output(x)?))
    }

    /// Returns `(J(x), dJ/dx)`.
    pub fn value_and_input_gradient(
        &self,
        x: &[f64],
        objective: &dyn Objective,
    ) -> Result<(f64, Vec<f64>), NnError> {
        let trace = self.forward(x)?;
        let value = objective.value(&trace);
        let mut seeds: Vec<Vec<f64>> = trace.per_layer.iter().map(|a| vec![0.0; a.len()]).collect();
        objective.accumulate_gradient(&trace, &mut seeds);
        let deltas = self.backprop(&trace, seeds, None);
        let grad = self.input_grad(&deltas[0]);
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(i));
        }
        Ok((value, grad))
    }

    pub fn input_gradient(&self, x: &[f64], objective: &dyn Objective) -> Result<Vec<f64>, NnError> {
        self.value_and_input_gradient(x, objective).map(|(_, g)| g)
    }

    /// Reverse pass returning dJ/dpre for every layer. `seeds[l]` is the
    /// direct dJ/da of layer `l`; `output_delta`, when given, replaces the
    /// output layer's dJ/dpre outright.
    fn backprop(
        &self,
        trace: &ActivationTrace,
        mut seeds: Vec<Vec<f64>>,
        output_delta: Option<Vec<f64>>,
    ) -> Vec<Vec<f64>> {
        let n = self.layers.len();
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut top = n;
        if let Some(d) = output_delta {
            deltas[n - 1] = d;
            top = n - 1;
        }
        for l in (0..top).rev() {
            let layer = &self.layers[l];
            if l + 1 < n {
                let next = &self.layers[l + 1];
                let upstream = &mut seeds[l];
                for (o, &d) in deltas[l + 1].iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &next.weights[o * next.inputs..(o + 1) * next.inputs];
                    for (u, w) in upstream.iter_mut().zip(row) {
                        *u += w * d;
                    }
                }
            }
            let mut delta = vec![0.0; layer.width];
            layer.activation.backward(&trace.per_layer[l], &seeds[l], &mut delta);
            if let Some(mask) = &layer.mask {
                for (d, &m) in delta.iter_mut().zip(mask) {
                    if m {
                        *d = 0.0;
                    }
                }
            }
            deltas[l] = delta;
        }
        deltas
    }

    fn input_grad(&self, first_delta: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.input_dim];
        let first = &self.layers[0];
        for (o, &d) in first_delta.iter().enumerate() {
            let row = &first.weights[o * first.inputs..(o + 1) * first.inputs];
            for (g, w) in grad.iter_mut().zip(row) {
                *g += w * d;
            }
        }
        grad
    }

    /// Returns a copy whose forward pass forces the flagged neurons of hidden
    /// layer `layer` to zero.
    pub fn mask_neurons(&self, layer: usize, positions: &[bool]) -> Result<Network, NnError> {
        if layer >= self.hidden_count() {
            return Err(NnError::BadLayer(layer));
        }
        let width = self.layers[layer].width;
        if positions.len() != width {
            return Err(NnError::DimensionMismatch { expected: width, got: positions.len() });
        }
        let mut net = self.clone();
        let target = &mut net.layers[layer];
        let merged: Vec<bool> = match &target.mask {
            Some(old) => old.iter().zip(positions).map(|(a, b)| *a || *b).collect(),
            None => positions.to_vec(),
        };
        target.mask = if merged.iter().any(|&m| m) { Some(merged) } else { None };
        Ok(net)
    }

    /// First `len` layers as a standalone network.
    pub fn prefix(&self, len: usize) -> Result<Network, NnError> {
        if len == 0 || len >= self.layers.len() {
            return Err(NnError::BadLayer(len));
        }
        Ok(Network { input_dim: self.input_dim, layers: self.layers[..len].to_vec() })
    }

    /// Appends `tail`'s layers after this network's layers.
    pub fn stack(&self, tail: &Network) -> Result<Network, NnError> {
        let width = self.layers.last().map(|l| l.width).unwrap_or(self.input_dim);
        if tail.input_dim != width {
            return Err(NnError::DimensionMismatch { expected: width, got: tail.input_dim });
        }
        let mut layers = self.layers.clone();
        layers.extend(tail.layers.iter().cloned());
        Network::from_layers(self.input_dim, layers)
    }

    /// SHA-256 over the IEEE bit patterns of all parameters.
    pub fn weight_hash(&self) -> String {
        weight_hash(&self.layers)
    }

    pub fn to_json(&self) -> Result<String, NnError> {
        let doc = ModelDocument { format: MODEL_FORMAT.into(), version: MODEL_VERSION, network: self.clone() };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Network, NnError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(NnError::InvalidNetwork(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        doc.network.validate()?;
        Ok(doc.network)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network, NnError> {
        Network::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn weight_hash(layers: &[Dense]) -> String {
    let mut h = Sha256::new();
    for l in layers {
        h.update((l.inputs as u64).to_le_bytes());
        h.update((l.width as u64).to_le_bytes());
        for v in l.weights.iter().chain(&l.biases) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn label_of(output: &[f64]) -> usize {
    if output.len() == 1 {
        return usize::from(output[0] > 0.5);
    }
    let mut best = 0;
    for (i, v) in output.iter().enumerate() {
        if *v > output[best] {
            best = i;
        }
    }
    best
}

const MODEL_FORMAT: &str = "fairtest-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    #[serde(flatten)]
    network: Network,
}

fn validate_specs(input_dim: usize, specs: &[LayerSpec]) -> Result<(), NnError> {
    if input_dim == 0 {
        return Err(NnError::InvalidNetwork("input_dim must be positive".into()));
    }
    if specs.is_empty() {
        return Err(NnError::InvalidNetwork("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.width == 0 {
            return Err(NnError::InvalidNetwork(format!("layer {i} has zero width")));
        }
        if s.activation == Activation::Softmax && i + 1 != specs.len() {
            return Err(NnError::InvalidNetwork(format!(
                "softmax is only allowed on the output layer (layer {i})"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, optimizer: Optimizer::Adam, epochs: 20, batch_size: 64, rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidTraining("learning_rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::InvalidTraining("epochs and batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub network: Network,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Mean cross-entropy of `net` over a labelled set.
pub fn cross_entropy(net: &Network, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64, NnError> {
    let mut total = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        let out = net.output(x)?;
        total -= class_probability(&out, y).max(PROB_FLOOR).ln();
    }
    Ok(total / inputs.len().max(1) as f64)
}

pub fn accuracy(net: &Network, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64, NnError> {
    if inputs.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (x, &y) in inputs.iter().zip(labels) {
        if net.predict(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / inputs.len() as f64)
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

/// Minimises the mean cross-entropy of `net` on `(inputs, labels)` and
/// returns the trained copy.
pub fn train(
    net: &Network,
    inputs: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport, NnError> {
    cfg.validate()?;
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(NnError::InvalidTraining("need a non-empty dataset with one label per row".into()));
    }
    let out = net.layers.last().expect("validated");
    let classes = match (out.activation, out.width) {
        (Activation::Softmax, w) => w,
        (Activation::Sigmoid, 1) => 2,
        _ => {
            return Err(NnError::InvalidTraining(
                "output layer must be softmax or a width-1 sigmoid".into(),
            ))
        }
    };
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(NnError::InvalidTraining(format!("label {bad} out of range for {classes} classes")));
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let shapes: Vec<(usize, usize)> = net.layers.iter().map(|l| (l.weights.len(), l.biases.len())).collect();
    let zero_like = || -> Vec<Vec<f64>> {
        shapes.iter().flat_map(|&(w, b)| [vec![0.0; w], vec![0.0; b]]).collect()
    };
    let mut adam = AdamState { m: zero_like(), v: zero_like(), t: 0 };
    let mut grads = zero_like();
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            for &i in batch {
                let x = &inputs[i];
                let y = labels[i];
                let trace = net.forward(x)?;
                let p = trace.output();
                epoch_loss -= class_probability(p, y).max(PROB_FLOOR).ln();
                // Softmax or sigmoid with cross-entropy: dJ/dpre = p - onehot.
                let mut out_delta = p.to_vec();
                if out_delta.len() == 1 {
                    out_delta[0] -= y as f64;
                } else {
                    out_delta[y] -= 1.0;
                }
                let seeds: Vec<Vec<f64>> = trace.per_layer.iter().map(|a| vec![0.0; a.len()]).collect();
                let deltas = net.backprop(&trace, seeds, Some(out_delta));
                for (l, delta) in deltas.iter().enumerate() {
                    let input = if l == 0 { x.as_slice() } else { trace.per_layer[l - 1].as_slice() };
                    let inputs_n = net.layers[l].inputs;
                    let gw = &mut grads[2 * l];
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = &mut gw[o * inputs_n..(o + 1) * inputs_n];
                        for (g, a) in row.iter_mut().zip(input) {
                            *g += d * a;
                        }
                    }
                    for (g, d) in grads[2 * l + 1].iter_mut().zip(delta.iter()) {
                        *g += d;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            apply_update(&mut net, &grads, scale, cfg, &mut adam);
        }
        epoch_loss /= inputs.len() as f64;
        if !epoch_loss.is_finite() || net.validate().is_err() {
            return Err(NnError::Divergence { epoch, loss: epoch_loss });
        }
        final_loss = epoch_loss;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
    }
    let train_accuracy = accuracy(&net, inputs, labels)?;
    Ok(TrainReport { network: net, final_loss, train_accuracy })
}

fn apply_update(net: &mut Network, grads: &[Vec<f64>], scale: f64, cfg: &TrainConfig, adam: &mut AdamState) {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    adam.t += 1;
    let bc1 = 1.0 - BETA1.powi(adam.t);
    let bc2 = 1.0 - BETA2.powi(adam.t);
    for (l, layer) in net.layers.iter_mut().enumerate() {
        for (k, params) in [&mut layer.weights, &mut layer.biases].into_iter().enumerate() {
            let idx = 2 * l + k;
            let g = &grads[idx];
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, gi) in params.iter_mut().zip(g) {
                        *p -= cfg.learning_rate * gi * scale;
                    }
                }
                Optimizer::Adam => {
                    let m = &mut adam.m[idx];
                    let v = &mut adam.v[idx];
                    for i in 0..params.len() {
                        let gi = g[i] * scale;
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                        let mh = m[i] / bc1;
                        let vh = v[i] / bc2;
                        params[i] -= cfg.learning_rate * mh / (vh.sqrt() + EPS);
                    }
                }
            }
        }
    }
}
