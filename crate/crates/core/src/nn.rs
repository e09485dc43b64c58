//! A small dense-network core: fully connected layers with optional layer
//! normalization and inverted dropout, exact reverse-mode gradients, Adam,
//! Polyak blending and a lossless JSON checkpoint format.
//!
//! Everything is `f64`. Batches are row-major `(batch, features)` matrices.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-12;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tape does not match this network: {0}")]
    TapeMismatch(String),
    #[error("parameter shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

/// Derivative of [`selu`]; at zero the left-hand value `λα` is used.
pub fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Selu => selu(x),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative given the input `x` and the already computed output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA
                } else {
                    // λα·eˣ = y + λα, and avoids a second exp.
                    y + SELU_LAMBDA * SELU_ALPHA
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Draws a `(fan_out, fan_in)` matrix with i.i.d. `N(0, 1/fan_in)` entries.
pub fn lecun_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    assert!(fan_in >= 1, "fan_in must be at least 1");
    let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("finite std");
    Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `(out, in)`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
    pub layer_norm: bool,
    pub dropout: f64,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
            activation,
            layer_norm: false,
            dropout: 0.0,
        }
    }

    /// LeCun-normal weights, zero biases.
    pub fn lecun<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            weights: lecun_init(in_dim, out_dim, rng),
            ..Self::zeros(in_dim, out_dim, activation)
        }
    }

    pub fn with_layer_norm(mut self, on: bool) -> Self {
        self.layer_norm = on;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn validate(&self) -> Result<()> {
        if self.biases.len() != self.out_dim() {
            return Err(NnError::InvalidLayer(format!(
                "{} biases for {} outputs",
                self.biases.len(),
                self.out_dim()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::InvalidLayer(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.in_dim() == 0 || self.out_dim() == 0 {
            return Err(NnError::InvalidLayer("empty layer".into()));
        }
        Ok(())
    }
}

/// Whether a forward pass trains (dropout active) or evaluates.
pub enum Pass<'r> {
    Eval,
    Train(&'r mut dyn RngCore),
}

impl Pass<'_> {
    pub fn reborrow(&mut self) -> Pass<'_> {
        match self {
            Pass::Eval => Pass::Eval,
            Pass::Train(rng) => Pass::Train(&mut **rng),
        }
    }
}

struct LayerTape {
    input: Array2<f64>,
    /// Input to the activation: the affine output, normalized when enabled.
    pre: Array2<f64>,
    /// Per-row `1/σ` of the affine output when layer norm is on.
    inv_std: Option<Array1<f64>>,
    /// Activation output before dropout.
    activated: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Intermediates recorded by [`Network::forward`] for [`Network::backward`].
pub struct Tape {
    shapes: Vec<(usize, usize)>,
    batch: usize,
    layers: Vec<LayerTape>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Layer-normalized pre-activations of layer `i`, if that layer normalizes.
    pub fn normalized(&self, i: usize) -> Option<ArrayView2<'_, f64>> {
        let layer = self.layers.get(i)?;
        layer.inv_std.as_ref().map(|_| layer.pre.view())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Parameter gradients shaped like a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

/// Flat views over every parameter tensor, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

fn contiguous<'a>(a: &'a Array2<f64>) -> &'a [f64] {
    a.as_slice().expect("standard layout")
}

impl Parameters for Gradients {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [contiguous(&l.weights), l.biases.as_slice().unwrap()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.biases.as_slice_mut().unwrap(),
                ]
            })
            .collect()
    }
}

/// An ordered stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
}

impl Parameters for Network {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [contiguous(&l.weights), l.biases.as_slice().unwrap()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.biases.as_slice_mut().unwrap(),
                ]
            })
            .collect()
    }
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NnError::InvalidLayer("network has no layers".into()));
        }
        for layer in &layers {
            layer.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::DimensionMismatch {
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weights.dim()).collect()
    }

    fn check_input(&self, input: &ArrayView2<'_, f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.ncols(),
            });
        }
        Ok(())
    }

    /// Evaluation-mode forward pass without recording a tape.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = affine(layer, x.view());
            if layer.layer_norm {
                normalize_rows(&mut z);
            }
            z.mapv_inplace(|v| layer.activation.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>, mut pass: Pass<'_>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&input)?;
        let mut tapes = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut pre = affine(layer, x.view());
            let inv_std = layer.layer_norm.then(|| normalize_rows(&mut pre));
            let activated = pre.mapv(|v| layer.activation.apply(v));
            let mask = match &mut pass {
                Pass::Train(rng) if layer.dropout > 0.0 => {
                    let keep = 1.0 - layer.dropout;
                    let rate = layer.dropout;
                    Some(Array2::from_shape_simple_fn(activated.dim(), || {
                        if rng.random::<f64>() < rate {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    }))
                }
                _ => None,
            };
            let out = match &mask {
                Some(m) => &activated * m,
                None => activated.clone(),
            };
            tapes.push(LayerTape {
                input: x,
                pre,
                inv_std,
                activated,
                mask,
            });
            x = out;
        }
        let tape = Tape {
            shapes: self.shapes(),
            batch: input.nrows(),
            layers: tapes,
        };
        Ok((x, tape))
    }

    fn check_tape(&self, tape: &Tape, grad_out: &ArrayView2<'_, f64>) -> Result<()> {
        if tape.shapes != self.shapes() {
            return Err(NnError::TapeMismatch("layer shapes differ".into()));
        }
        if grad_out.dim() != (tape.batch, self.output_dim()) {
            return Err(NnError::TapeMismatch(format!(
                "output gradient {:?} vs expected {:?}",
                grad_out.dim(),
                (tape.batch, self.output_dim())
            )));
        }
        Ok(())
    }

    /// Reverse pass returning parameter gradients and the input gradient.
    pub fn backward(
        &self,
        tape: &Tape,
        grad_out: ArrayView2<'_, f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        self.check_tape(tape, &grad_out)?;
        let (grads, dx) = self.reverse(tape, grad_out, true);
        Ok((grads.expect("requested"), dx))
    }

    /// Reverse pass that only propagates to the input.
    pub fn backward_input(&self, tape: &Tape, grad_out: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_tape(tape, &grad_out)?;
        Ok(self.reverse(tape, grad_out, false).1)
    }

    fn reverse(
        &self,
        tape: &Tape,
        grad_out: ArrayView2<'_, f64>,
        with_params: bool,
    ) -> (Option<Gradients>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.to_owned();
        for (layer, rec) in self.layers.iter().zip(&tape.layers).rev() {
            if let Some(mask) = &rec.mask {
                delta *= mask;
            }
            ndarray::Zip::from(&mut delta)
                .and(&rec.pre)
                .and(&rec.activated)
                .for_each(|d, &x, &y| *d *= layer.activation.derivative(x, y));
            if let Some(inv_std) = &rec.inv_std {
                layer_norm_backward(&mut delta, &rec.pre, inv_std);
            }
            if with_params {
                let weights = delta.t().dot(&rec.input);
                grads.push(LayerGradient {
                    weights: if weights.is_standard_layout() {
                        weights
                    } else {
                        weights.as_standard_layout().into_owned()
                    },
                    biases: delta.sum_axis(Axis(0)),
                });
            }
            delta = delta.dot(&layer.weights);
        }
        grads.reverse();
        (with_params.then_some(Gradients { layers: grads }), delta)
    }

    /// A zero gradient with this network's shapes.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Array2::zeros(l.weights.dim()),
                    biases: Array1::zeros(l.biases.len()),
                })
                .collect(),
        }
    }

    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    activation: l.activation,
                    layer_norm: l.layer_norm,
                    dropout: l.dropout,
                    weights: contiguous(&l.weights).to_vec(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_spec(spec: &NetworkSpec) -> Result<Self> {
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.out_dim, l.in_dim), l.weights.clone())
                    .map_err(|e| NnError::Malformed(format!("weights: {e}")))?;
                if l.biases.len() != l.out_dim {
                    return Err(NnError::Malformed(format!(
                        "{} biases for {} outputs",
                        l.biases.len(),
                        l.out_dim
                    )));
                }
                Ok(DenseLayer {
                    weights,
                    biases: Array1::from_vec(l.biases.clone()),
                    activation: l.activation,
                    layer_norm: l.layer_norm,
                    dropout: l.dropout,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }
}

fn affine(layer: &DenseLayer, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weights.t());
    z += &layer.biases;
    z
}

/// Normalizes each row to zero mean and unit variance, returning `1/σ` per row.
fn normalize_rows(z: &mut Array2<f64>) -> Array1<f64> {
    let n = z.ncols() as f64;
    let mut inv_std = Array1::zeros(z.nrows());
    for (mut row, s) in z.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row *= inv;
        *s = inv;
    }
    inv_std
}

/// In place: gradient w.r.t. the normalized values → gradient w.r.t. the raw values.
fn layer_norm_backward(delta: &mut Array2<f64>, normed: &Array2<f64>, inv_std: &Array1<f64>) {
    let n = delta.ncols() as f64;
    for ((mut d, xhat), &inv) in delta.rows_mut().into_iter().zip(normed.rows()).zip(inv_std) {
        let mean_d = d.sum() / n;
        let mean_dx = d.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
        ndarray::Zip::from(&mut d)
            .and(&xhat)
            .for_each(|g, &xh| *g = inv * (*g - mean_d - xh * mean_dx));
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(params: &P, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let mut ps = params.tensors_mut();
        let gs = grads.tensors();
        if ps.len() != gs.len() || ps.len() != self.m.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} parameter tensors, {} gradient tensors, {} moment tensors",
                ps.len(),
                gs.len(),
                self.m.len()
            )));
        }
        for ((p, g), m) in ps.iter().zip(&gs).zip(&self.m) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(NnError::ShapeMismatch("tensor lengths differ".into()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in ps.iter_mut().zip(&gs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Polyak blending `θ' ← τθ + (1−τ)θ'`.
pub fn soft_update<P: Parameters + ?Sized>(target: &mut P, online: &P, tau: f64) -> Result<()> {
    let mut ts = target.tensors_mut();
    let os = online.tensors();
    if ts.len() != os.len() || ts.iter().zip(&os).any(|(t, o)| t.len() != o.len()) {
        return Err(NnError::ShapeMismatch("target and online networks differ".into()));
    }
    for (t, o) in ts.iter_mut().zip(&os) {
        for (ti, &oi) in t.iter_mut().zip(o.iter()) {
            *ti = tau * oi + (1.0 - tau) * *ti;
        }
    }
    Ok(())
}

/// Serialized form of one layer. Weights are row-major `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub layer_norm: bool,
    pub dropout: f64,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

/// A versioned JSON document holding named networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub networks: BTreeMap<String, NetworkSpec>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            networks: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, net: &Network) {
        self.networks.insert(name.to_string(), net.to_spec());
    }

    pub fn network(&self, name: &str) -> Result<Network> {
        let spec = self
            .networks
            .get(name)
            .ok_or_else(|| NnError::Malformed(format!("missing network {name:?}")))?;
        Network::from_spec(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        let finite = self
            .networks
            .values()
            .flat_map(|n| &n.layers)
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()));
        if !finite {
            return Err(NnError::Malformed("non-finite parameter".into()));
        }
        serde_json::to_string(self).map_err(|e| NnError::Malformed(e.to_string()))
    }

    /// Parses a document, checking the version before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| NnError::Malformed(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| NnError::Malformed("missing format_version".into()))?;
        if found != u64::from(CHECKPOINT_FORMAT_VERSION) {
            return Err(NnError::VersionMismatch {
                found: found.try_into().unwrap_or(u32::MAX),
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| NnError::Malformed(e.to_string()))
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}
