//! A small fully connected network with hand-written reverse mode.
//!
//! Weights are stored input-major (`weights[i * outputs + o]`) so that sparse
//! one-hot inputs skip whole rows in both passes.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("parameter file: {0}")]
    Params(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    /// Raw outputs (values).
    Linear,
    /// Probabilities over discrete actions.
    Softmax,
    /// First half of the outputs are means, second half log standard
    /// deviations clamped to `[log_std_min, log_std_max]`.
    Gaussian { log_std_min: f64, log_std_max: f64 },
}

impl Head {
    pub fn gaussian() -> Self {
        Head::Gaussian { log_std_min: -5.0, log_std_max: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * xi;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    activation: Activation,
    head: Head,
}

/// Intermediate values of one forward pass, needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l]` feeds layer `l`.
    activations: Vec<Vec<f64>>,
    /// Pre-head outputs of the last layer.
    logits: Vec<f64>,
    output: Vec<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// Gradients shaped like a [`DenseNet`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Layer>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self { layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|g| g == 0.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|g| *g *= factor);
    }

    pub fn add(&mut self, other: &GradientSet) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }

    pub fn clear(&mut self) {
        self.values_mut().for_each(|g| *g = 0.0);
    }
}

impl DenseNet {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activation: Activation, head: Head, rng: &mut R) -> Self {
        let mut net = Self::zeros(dims, activation, head);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub fn zeros(dims: &[usize], activation: Activation, head: Head) -> Self {
        assert!(dims.len() >= 2, "a network needs input and output dimensions");
        if let Head::Gaussian { log_std_min, log_std_max } = head {
            assert!(dims[dims.len() - 1].is_multiple_of(2), "Gaussian head needs mean and log-std outputs");
            assert!(log_std_min < log_std_max);
        }
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self { layers, activation, head }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        Ok(self.forward_trace(input)?.output)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace, NetError> {
        if input.len() != self.input_dim() {
            return Err(NetError::Dimension { expected: self.input_dim(), got: input.len() });
        }
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(input.to_vec());
        let mut buf = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&activations[l], &mut buf);
            if l + 1 < self.layers.len() {
                let act = match self.activation {
                    Activation::Tanh => buf.iter().map(|z| z.tanh()).collect(),
                    Activation::Relu => buf.iter().map(|z| z.max(0.0)).collect(),
                };
                activations.push(act);
            }
        }
        let logits = buf;
        let output = self.apply_head(&logits);
        Ok(ForwardTrace { activations, logits, output })
    }

    fn apply_head(&self, logits: &[f64]) -> Vec<f64> {
        match self.head {
            Head::Linear => logits.to_vec(),
            Head::Softmax => softmax(logits),
            Head::Gaussian { log_std_min, log_std_max } => {
                let d = logits.len() / 2;
                logits[..d]
                    .iter()
                    .copied()
                    .chain(logits[d..].iter().map(|z| z.clamp(log_std_min, log_std_max)))
                    .collect()
            }
        }
    }

    /// Gradient of `sum_k upstream[k] * output[k]` with respect to every parameter.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<GradientSet, NetError> {
        let trace = self.forward_trace(input)?;
        let mut grads = GradientSet::zeros_like(self);
        self.accumulate(&trace, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Adds the gradient for `upstream` (taken with respect to the head output) into `grads`.
    pub fn accumulate(&self, trace: &ForwardTrace, upstream: &[f64], grads: &mut GradientSet) -> Result<(), NetError> {
        if upstream.len() != self.output_dim() {
            return Err(NetError::Dimension { expected: self.output_dim(), got: upstream.len() });
        }
        let d_logits = match self.head {
            Head::Linear => upstream.to_vec(),
            Head::Softmax => {
                let p = &trace.output;
                let dot: f64 = upstream.iter().zip(p).map(|(g, p)| g * p).sum();
                p.iter().zip(upstream).map(|(p, g)| p * (g - dot)).collect()
            }
            Head::Gaussian { log_std_min, log_std_max } => {
                let d = upstream.len() / 2;
                let mut out = upstream.to_vec();
                for (o, &z) in out[d..].iter_mut().zip(&trace.logits[d..]) {
                    if z < log_std_min || z > log_std_max {
                        *o = 0.0;
                    }
                }
                out
            }
        };
        self.accumulate_from_logits(trace, &d_logits, grads);
        Ok(())
    }

    /// Adds the gradient for `d_logits`, the derivative with respect to the
    /// last layer's pre-head outputs, into `grads`.
    pub fn accumulate_from_logits(&self, trace: &ForwardTrace, d_logits: &[f64], grads: &mut GradientSet) {
        let mut delta = d_logits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let grad = &mut grads.layers[l];
            let x = &trace.activations[l];
            for (gb, d) in grad.biases.iter_mut().zip(&delta) {
                *gb += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut grad.weights[i * layer.outputs..(i + 1) * layer.outputs];
                for (g, d) in row.iter_mut().zip(&delta) {
                    *g += xi * d;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (i, p) in prev.iter_mut().enumerate() {
                let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                let s: f64 = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
                let a = x[i];
                *p = match self.activation {
                    Activation::Tanh => s * (1.0 - a * a),
                    Activation::Relu => {
                        if a > 0.0 {
                            s
                        } else {
                            0.0
                        }
                    }
                };
            }
            delta = prev;
        }
    }

    /// Copies all parameters from a network of the same shape.
    pub fn copy_from(&mut self, other: &DenseNet) {
        assert_eq!(self.layer_dims(), other.layer_dims(), "shape mismatch");
        self.layers.clone_from(&other.layers);
    }

    /// Writes parameters as CSV rows `tensor,index,value`.
    pub fn write_params_csv<W: Write>(&self, out: W) -> Result<(), NetError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| NetError::Params(e.to_string());
        w.write_record(["tensor", "index", "value"]).map_err(err)?;
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, values) in [("weight", &layer.weights), ("bias", &layer.biases)] {
                for (i, v) in values.iter().enumerate() {
                    w.write_record([format!("layer{l}.{name}"), i.to_string(), v.to_string()]).map_err(err)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Loads parameters written by [`write_params_csv`](Self::write_params_csv)
    /// into a network of the same architecture.
    pub fn read_params_csv<R: BufRead>(&mut self, input: R) -> Result<(), NetError> {
        let mut r = csv::Reader::from_reader(input);
        let expected = self.parameter_count();
        let mut seen = 0usize;
        let mut slots: Vec<(String, usize)> = Vec::with_capacity(expected);
        for (l, layer) in self.layers.iter().enumerate() {
            for i in 0..layer.weights.len() {
                slots.push((format!("layer{l}.weight"), i));
            }
            for i in 0..layer.biases.len() {
                slots.push((format!("layer{l}.bias"), i));
            }
        }
        let mut values = Vec::with_capacity(expected);
        for record in r.records() {
            let record = record.map_err(|e| NetError::Params(e.to_string()))?;
            let (tensor, index, value) = (&record[0], &record[1], &record[2]);
            let slot = slots.get(seen).ok_or_else(|| NetError::Params("more values than parameters".into()))?;
            let index: usize = index.parse().map_err(|_| NetError::Params(format!("bad index {index}")))?;
            if tensor != slot.0 || index != slot.1 {
                return Err(NetError::Params(format!("expected {}[{}], found {tensor}[{index}]", slot.0, slot.1)));
            }
            values.push(value.parse::<f64>().map_err(|_| NetError::Params(format!("bad value {value}")))?);
            seen += 1;
        }
        if seen != expected {
            return Err(NetError::Params(format!("expected {expected} values, found {seen}")));
        }
        for (p, v) in self.parameters_mut().zip(values) {
            *p = v;
        }
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64, t: u64, m: GradientSet, v: GradientSet },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, net: &DenseNet) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam { beta1, beta2, epsilon } => OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                t: 0,
                m: GradientSet::zeros_like(net),
                v: GradientSet::zeros_like(net),
            },
        }
    }
}

/// Descends along `grads` (gradients of a loss to minimise).
pub fn optimizer_step(net: &mut DenseNet, grads: &GradientSet, state: &mut OptimizerState, learning_rate: f64) {
    match state {
        OptimizerState::Sgd => {
            for (p, g) in net.parameters_mut().zip(grads.values()) {
                *p -= learning_rate * g;
            }
        }
        OptimizerState::Adam { beta1, beta2, epsilon, t, m, v } => {
            *t += 1;
            let c1 = 1.0 - beta1.powi(*t as i32);
            let c2 = 1.0 - beta2.powi(*t as i32);
            let params = net.parameters_mut();
            for (((p, g), mi), vi) in params.zip(grads.values()).zip(m.values_mut()).zip(v.values_mut()) {
                *mi = *beta1 * *mi + (1.0 - *beta1) * g;
                *vi = *beta2 * *vi + (1.0 - *beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + *epsilon);
            }
        }
    }
}
