//! Minimal feed-forward networks with analytic gradients.
//!
//! Everything trained in this crate (critics, state value, auxiliary policy,
//! final policy) is a small ReLU MLP over `f64`. The module deliberately stays
//! away from general autodiff: a `Net` owns per-layer weight/bias vectors in a
//! fixed layout, `forward_trace` caches activations, and `backward` replays the
//! chain rule into a [`GradBuf`]. Two nets built from equal specs are
//! element-wise comparable.

mod adam;
mod checkpoint;

pub use adam::Adam;
pub use checkpoint::{load_net, save_net};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutputActivation {
    /// Raw affine output (value heads).
    Identity,
    /// `scale * tanh(z)`, squashing outputs into `[-scale, scale]` (policy heads).
    Bounded(f64),
}

/// Architecture description: dims plus output activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
}

impl NetSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let spec = NetSpec {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("net dims must all be >= 1"));
        }
        if let OutputActivation::Bounded(scale) = self.output_activation {
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::invalid(format!(
                    "bounded output scale must be positive and finite, got {scale}"
                )));
            }
        }
        Ok(())
    }

    /// `(in, out)` dims of every affine layer, hidden layers first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(i, o)| i * o + o)
            .sum()
    }
}

/// One affine layer. Weights are row-major `(out, in)`; the layout never
/// changes, so checkpoints and element-wise comparisons are well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

/// A network: spec plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    spec: NetSpec,
    layers: Vec<Layer>,
}

impl Net {
    /// Zero-initialized network.
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| Layer {
                w: vec![0.0; i * o],
                b: vec![0.0; o],
                in_dim: i,
                out_dim: o,
            })
            .collect();
        Ok(Net { spec, layers })
    }

    /// Fan-in uniform init: weights and biases drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` per layer.
    pub fn init<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        let mut net = Net::zeros(spec)?;
        for layer in &mut net.layers {
            let limit = 1.0 / (layer.in_dim as f64).sqrt();
            for w in &mut layer.w {
                *w = rng.gen_range(-limit..limit);
            }
            for b in &mut layer.b {
                *b = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::invalid(format!(
                "input length {} does not match input_dim {}",
                x.len(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Plain forward pass. Deterministic: identical `(params, x)` give
    /// bit-identical output.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim];
            affine(layer, &cur, next.as_mut_slice());
            if idx < last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            } else {
                apply_output(self.spec.output_activation, &mut next);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Forward pass that fills `trace` with the cached activations `backward`
    /// needs. The trace buffers are reused across calls.
    pub fn forward_trace(&self, x: &[f64], trace: &mut ForwardTrace) -> Result<()> {
        self.check_input(x)?;
        trace.ensure_shape(self);
        trace.input.clear();
        trace.input.extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            if idx == 0 {
                affine(layer, &trace.input, &mut trace.pre[idx]);
            } else {
                let (prev, rest) = trace.pre.split_at_mut(idx);
                let _ = prev;
                affine(layer, &trace.post[idx - 1], &mut rest[0]);
            }
            trace.post[idx].copy_from_slice(&trace.pre[idx]);
            if idx < last {
                for v in &mut trace.post[idx] {
                    *v = v.max(0.0);
                }
            } else {
                apply_output(self.spec.output_activation, &mut trace.post[idx]);
            }
        }
        trace.valid = true;
        Ok(())
    }

    /// Output of the last `forward_trace` call.
    pub fn trace_output<'t>(&self, trace: &'t ForwardTrace) -> &'t [f64] {
        &trace.post[self.layers.len() - 1]
    }

    /// Backpropagate `upstream` (the gradient of some scalar w.r.t. the net
    /// output) through the cached trace. Parameter gradients are *accumulated*
    /// into `grads`; the gradient w.r.t. the input is written (overwritten)
    /// into `d_input` when provided.
    ///
    /// Requires a trace produced by `forward_trace` on a net of this shape;
    /// anything else is a state error.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut GradBuf,
        mut d_input: Option<&mut [f64]>,
    ) -> Result<()> {
        if !trace.valid || !trace.matches(self) {
            return Err(Error::State(
                "backward called without a matching forward trace".into(),
            ));
        }
        if upstream.len() != self.spec.output_dim {
            return Err(Error::invalid(format!(
                "upstream length {} does not match output_dim {}",
                upstream.len(),
                self.spec.output_dim
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::State("grad buffer shape mismatch".into()));
        }

        let last = self.layers.len() - 1;
        // d_z for the output layer.
        let mut dz: Vec<f64> = match self.spec.output_activation {
            OutputActivation::Identity => upstream.to_vec(),
            OutputActivation::Bounded(scale) => {
                // y = scale * tanh(z)  =>  dy/dz = scale - y^2 / scale
                upstream
                    .iter()
                    .zip(&trace.post[last])
                    .map(|(&u, &y)| u * (scale - y * y / scale))
                    .collect()
            }
        };

        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let input: &[f64] = if idx == 0 {
                &trace.input
            } else {
                &trace.post[idx - 1]
            };
            let g = &mut grads.layers[idx];
            for o in 0..layer.out_dim {
                let d = dz[o];
                g.db[o] += d;
                let row = o * layer.in_dim;
                for i in 0..layer.in_dim {
                    g.dw[row + i] += d * input[i];
                }
            }
            if idx > 0 {
                // Gradient into the previous post-activation, then through ReLU.
                let mut d_prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = dz[o];
                    let row = o * layer.in_dim;
                    for i in 0..layer.in_dim {
                        d_prev[i] = layer.w[row + i].mul_add(d, d_prev[i]);
                    }
                }
                for (i, dp) in d_prev.iter_mut().enumerate() {
                    if trace.pre[idx - 1][i] <= 0.0 {
                        *dp = 0.0;
                    }
                }
                dz = d_prev;
            } else if let Some(di) = d_input.as_deref_mut() {
                for v in di.iter_mut() {
                    *v = 0.0;
                }
                for o in 0..layer.out_dim {
                    let d = dz[o];
                    let row = o * layer.in_dim;
                    for i in 0..layer.in_dim {
                        di[i] += layer.w[row + i] * d;
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient of `upstream . output` w.r.t. the input only, skipping the
    /// parameter accumulation (used when this net is frozen in a loss).
    pub fn input_gradient(&self, trace: &ForwardTrace, upstream: &[f64]) -> Result<Vec<f64>> {
        if !trace.valid || !trace.matches(self) {
            return Err(Error::State(
                "input_gradient called without a matching forward trace".into(),
            ));
        }
        let last = self.layers.len() - 1;
        let mut dz: Vec<f64> = match self.spec.output_activation {
            OutputActivation::Identity => upstream.to_vec(),
            OutputActivation::Bounded(scale) => upstream
                .iter()
                .zip(&trace.post[last])
                .map(|(&u, &y)| u * (scale - y * y / scale))
                .collect(),
        };
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let mut d_prev = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let d = dz[o];
                let row = o * layer.in_dim;
                for i in 0..layer.in_dim {
                    d_prev[i] += layer.w[row + i] * d;
                }
            }
            if idx > 0 {
                for (i, dp) in d_prev.iter_mut().enumerate() {
                    if trace.pre[idx - 1][i] <= 0.0 {
                        *dp = 0.0;
                    }
                }
            }
            dz = d_prev;
        }
        Ok(dz)
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Polyak update: `self <- (1 - xi) * self + xi * online`.
    pub fn polyak_from(&mut self, online: &Net, xi: f64) -> Result<()> {
        if self.spec != online.spec {
            return Err(Error::invalid("polyak update across different net specs"));
        }
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::invalid(format!("polyak rate must be in [0,1], got {xi}")));
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (tw, ow) in t.w.iter_mut().zip(&o.w) {
                *tw = (1.0 - xi) * *tw + xi * ow;
            }
            for (tb, ob) in t.b.iter_mut().zip(&o.b) {
                *tb = (1.0 - xi) * *tb + xi * ob;
            }
        }
        Ok(())
    }

    /// Flat read access in layer order (w then b per layer).
    pub fn param(&self, idx: usize) -> f64 {
        let mut rest = idx;
        for layer in &self.layers {
            if rest < layer.w.len() {
                return layer.w[rest];
            }
            rest -= layer.w.len();
            if rest < layer.b.len() {
                return layer.b[rest];
            }
            rest -= layer.b.len();
        }
        panic!("param index {idx} out of range");
    }

    /// Flat write access, mirroring [`Net::param`].
    pub fn set_param(&mut self, idx: usize, value: f64) {
        let mut rest = idx;
        for layer in &mut self.layers {
            if rest < layer.w.len() {
                layer.w[rest] = value;
                return;
            }
            rest -= layer.w.len();
            if rest < layer.b.len() {
                layer.b[rest] = value;
                return;
            }
            rest -= layer.b.len();
        }
        panic!("param index {idx} out of range");
    }

    /// All parameters as one flat vector (layer order, w then b).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

fn affine(layer: &Layer, input: &[f64], out: &mut [f64]) {
    debug_assert_eq!(input.len(), layer.in_dim);
    debug_assert_eq!(out.len(), layer.out_dim);
    for o in 0..layer.out_dim {
        let row = o * layer.in_dim;
        let mut sum = layer.b[o];
        for (i, &x) in input.iter().enumerate() {
            sum += layer.w[row + i] * x;
        }
        out[o] = sum;
    }
}

fn apply_output(act: OutputActivation, out: &mut [f64]) {
    if let OutputActivation::Bounded(scale) = act {
        for v in out.iter_mut() {
            *v = scale * v.tanh();
        }
    }
}

/// Cached activations from `forward_trace`.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    input: Vec<f64>,
    /// Pre-activation values per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation values per layer (ReLU or output activation applied).
    post: Vec<Vec<f64>>,
    valid: bool,
}

impl ForwardTrace {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_shape(&mut self, net: &Net) {
        if self.pre.len() != net.layers.len() {
            self.pre = net.layers.iter().map(|l| vec![0.0; l.out_dim]).collect();
            self.post = net.layers.iter().map(|l| vec![0.0; l.out_dim]).collect();
        } else {
            for (buf, layer) in self.pre.iter_mut().zip(&net.layers) {
                buf.resize(layer.out_dim, 0.0);
            }
            for (buf, layer) in self.post.iter_mut().zip(&net.layers) {
                buf.resize(layer.out_dim, 0.0);
            }
        }
        self.valid = false;
    }

    fn matches(&self, net: &Net) -> bool {
        self.input.len() == net.spec.input_dim
            && self.pre.len() == net.layers.len()
            && self
                .pre
                .iter()
                .zip(&net.layers)
                .all(|(buf, l)| buf.len() == l.out_dim)
    }
}

/// Per-layer gradient accumulator with the same layout as [`Net`].
#[derive(Debug, Clone)]
pub struct GradBuf {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl GradBuf {
    pub fn zeros_like(net: &Net) -> Self {
        GradBuf {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    dw: vec![0.0; l.w.len()],
                    db: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.dw.fill(0.0);
            l.db.fill(0.0);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            for v in &mut l.dw {
                *v *= c;
            }
            for v in &mut l.db {
                *v *= c;
            }
        }
    }

    /// Flat read access matching [`Net::param`] indexing.
    pub fn grad(&self, idx: usize) -> f64 {
        let mut rest = idx;
        for layer in &self.layers {
            if rest < layer.dw.len() {
                return layer.dw[rest];
            }
            rest -= layer.dw.len();
            if rest < layer.db.len() {
                return layer.db[rest];
            }
            rest -= layer.db.len();
        }
        panic!("grad index {idx} out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.dw.iter().chain(&l.db).all(|v| v.is_finite()))
    }
}
