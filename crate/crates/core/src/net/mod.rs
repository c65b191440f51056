//! Dense feed-forward Q-network with rectifier hidden layers and a linear head.
//!
//! Parameters live in one flat buffer. Each layer stores its weights
//! input-major (`w[i * n_out + j]` connects input `i` to output `j`) followed
//! by its biases, so the inner loops of the forward and backward passes run
//! over contiguous outputs. The weight file format is output-major; see
//! [`io`].

mod adam;
mod gradcheck;
mod kernels;
pub mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use gradcheck::{check_gradients, gradient_check, gradient_check_nets, GradCheckBatch};
pub use io::{format_f64, load_weights, save_weights, ModelKind, WeightFile, WeightMeta, WEIGHT_FILE_VERSION};

use crate::error::{Error, Result};
use crate::geometry::ActionIndex;

/// Layer widths of the Q-network: 8 features in, two hidden layers of 64, 8 Q-values out.
pub const DEFAULT_ARCH: [usize; 4] = [8, 64, 64, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    Huber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSpan {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

impl LayerSpan {
    fn end(&self) -> usize {
        self.b + self.n_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Vec<usize>,
    spans: Vec<LayerSpan>,
    params: Vec<f64>,
}

fn spans_for(arch: &[usize]) -> Vec<LayerSpan> {
    let mut off = 0;
    arch.windows(2)
        .map(|w| {
            let span = LayerSpan {
                n_in: w[0],
                n_out: w[1],
                w: off,
                b: off + w[0] * w[1],
            };
            off = span.end();
            span
        })
        .collect()
}

/// Network with the default architecture, initialized from `seed`.
pub fn init_network(seed: u64) -> Network {
    Network::new(&DEFAULT_ARCH, seed).expect("default architecture is valid")
}

impl Network {
    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new(arch: &[usize], seed: u64) -> Result<Self> {
        let mut net = Network::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in net.spans.clone() {
            let bound = (6.0 / (s.n_in + s.n_out) as f64).sqrt();
            for p in &mut net.params[s.w..s.b] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(arch: &[usize]) -> Result<Self> {
        if arch.len() < 2 || arch.contains(&0) {
            return Err(Error::Shape(format!("invalid architecture {arch:?}")));
        }
        let spans = spans_for(arch);
        let len = spans.last().map_or(0, LayerSpan::end);
        Ok(Network {
            arch: arch.to_vec(),
            spans,
            params: vec![0.0; len],
        })
    }

    pub fn arch(&self) -> &[usize] {
        &self.arch
    }

    pub fn input_len(&self) -> usize {
        self.arch[0]
    }

    pub fn output_len(&self) -> usize {
        *self.arch.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.spans.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self, layer: usize, out: usize, input: usize) -> f64 {
        let s = self.spans[layer];
        self.params[s.w + input * s.n_out + out]
    }

    pub fn set_weight(&mut self, layer: usize, out: usize, input: usize, value: f64) {
        let s = self.spans[layer];
        self.params[s.w + input * s.n_out + out] = value;
    }

    pub fn bias(&self, layer: usize, out: usize) -> f64 {
        self.params[self.spans[layer].b + out]
    }

    pub fn set_bias(&mut self, layer: usize, out: usize, value: f64) {
        let s = self.spans[layer];
        self.params[s.b + out] = value;
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn same_arch(&self, other: &Network) -> bool {
        self.arch == other.arch
    }

    /// Copies all parameters from `other` without reallocating.
    pub fn copy_from(&mut self, other: &Network) {
        assert!(self.same_arch(other), "architecture mismatch");
        self.params.copy_from_slice(&other.params);
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "expected {} input features, got {}",
                self.input_len(),
                input.len()
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input feature".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut scratch = ForwardScratch::default();
        Ok(self.forward_with(input, &mut scratch).to_vec())
    }

    /// Single-sample forward pass reusing `scratch`; input length must match.
    pub fn forward_with<'s>(&self, input: &[f64], scratch: &'s mut ForwardScratch) -> &'s [f64] {
        debug_assert_eq!(input.len(), self.input_len());
        scratch.a.clear();
        scratch.a.extend_from_slice(input);
        let last = self.spans.len() - 1;
        for (l, s) in self.spans.iter().enumerate() {
            scratch.z.clear();
            scratch.z.extend_from_slice(&self.params[s.b..s.end()]);
            affine_accumulate(&self.params[s.w..s.b], s.n_out, &scratch.a, &mut scratch.z);
            if l < last {
                relu_in_place(&mut scratch.z);
            }
            std::mem::swap(&mut scratch.a, &mut scratch.z);
        }
        &scratch.a
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy_action(&self, input: &[f64], scratch: &mut ForwardScratch) -> ActionIndex {
        let q = self.forward_with(input, scratch);
        ActionIndex::new(argmax(q)).expect("network emits one value per action")
    }

    /// Batched forward pass; keeps every layer's activations for backprop.
    /// `inputs` holds `batch` rows of `input_len` features.
    pub fn forward_batch<'s>(
        &self,
        inputs: &[f64],
        batch: usize,
        scratch: &'s mut BatchScratch,
    ) -> &'s [f64] {
        debug_assert_eq!(inputs.len(), batch * self.input_len());
        scratch.acts.resize_with(self.spans.len() + 1, Vec::new);
        scratch.acts[0].clear();
        scratch.acts[0].extend_from_slice(inputs);
        let last = self.spans.len() - 1;
        for (l, s) in self.spans.iter().enumerate() {
            let (done, rest) = scratch.acts.split_at_mut(l + 1);
            let input = &done[l];
            let out = &mut rest[0];
            out.clear();
            let bias = &self.params[s.b..s.end()];
            for _ in 0..batch {
                out.extend_from_slice(bias);
            }
            kernels::gemm_acc(input, &self.params[s.w..s.b], out, batch, s.n_in, s.n_out);
            if l < last {
                relu_in_place(out);
            }
        }
        &scratch.acts[self.spans.len()]
    }

    /// Backpropagates output gradients `d_out` (batch x outputs) through the
    /// activations left in `scratch` by [`Network::forward_batch`], adding
    /// parameter gradients into `grads`.
    pub fn backward_batch(
        &self,
        d_out: &[f64],
        batch: usize,
        scratch: &mut BatchScratch,
        grads: &mut Gradients,
    ) {
        debug_assert_eq!(grads.values.len(), self.params.len());
        scratch.delta.clear();
        scratch.delta.extend_from_slice(d_out);
        for (l, s) in self.spans.iter().enumerate().rev() {
            let input = &scratch.acts[l];
            let w = &self.params[s.w..s.b];
            let (gw, gb) = grads.values[s.w..s.end()].split_at_mut(s.n_in * s.n_out);
            for d in scratch.delta.chunks_exact(s.n_out) {
                for (g, &dj) in gb.iter_mut().zip(d) {
                    *g += dj;
                }
            }
            kernels::gemm_tn_acc(input, &scratch.delta, gw, batch, s.n_in, s.n_out);
            if l == 0 {
                break;
            }
            scratch.wt.clear();
            scratch.wt.resize(s.n_in * s.n_out, 0.0);
            for (i, row) in w.chunks_exact(s.n_out).enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    scratch.wt[j * s.n_in + i] = v;
                }
            }
            scratch.prev_delta.clear();
            scratch.prev_delta.resize(batch * s.n_in, 0.0);
            kernels::gemm_acc(&scratch.delta, &scratch.wt, &mut scratch.prev_delta, batch, s.n_out, s.n_in);
            // input of this layer is a rectified activation: gate by a > 0
            for (p, &a) in scratch.prev_delta.iter_mut().zip(input.iter()) {
                if !(a > 0.0) {
                    *p = 0.0;
                }
            }
            std::mem::swap(&mut scratch.delta, &mut scratch.prev_delta);
        }
    }
}

/// `z += W^T x` for input-major `w` with `n_out` columns.
#[inline]
fn affine_accumulate(w: &[f64], n_out: usize, x: &[f64], z: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        // rectified inputs are often exactly zero
        if xi != 0.0 {
            let row = &w[i * n_out..(i + 1) * n_out];
            for (zj, &wj) in z.iter_mut().zip(row) {
                *zj += xi * wj;
            }
        }
    }
}

#[inline]
fn relu_in_place(z: &mut [f64]) {
    for v in z {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Default)]
pub struct ForwardScratch {
    a: Vec<f64>,
    z: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct BatchScratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev_delta: Vec<f64>,
    wt: Vec<f64>,
}

/// Parameter gradients in the same flat layout as [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            values: vec![0.0; net.num_params()],
        }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }
}

/// Reusable buffers for repeated loss/gradient evaluations.
#[derive(Debug, Clone, Default)]
pub struct LossWorkspace {
    batch: BatchScratch,
    d_out: Vec<f64>,
}

/// Per-sample loss and its derivative with respect to the prediction.
fn loss_term(kind: LossKind, err: f64) -> (f64, f64) {
    match kind {
        LossKind::Mse => (err * err, 2.0 * err),
        LossKind::Huber => {
            if err.abs() <= 1.0 {
                (0.5 * err * err, err)
            } else {
                (err.abs() - 0.5, err.signum())
            }
        }
    }
}

/// Mean TD loss on the selected actions; gradients are written into `grads`
/// (cleared first). `inputs` is a flat `batch x input_len` buffer.
pub fn loss_and_gradients_into(
    net: &Network,
    inputs: &[f64],
    actions: &[ActionIndex],
    targets: &[f64],
    kind: LossKind,
    ws: &mut LossWorkspace,
    grads: &mut Gradients,
) -> Result<f64> {
    let batch = actions.len();
    if batch == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if targets.len() != batch || inputs.len() != batch * net.input_len() {
        return Err(Error::Shape(format!(
            "batch of {batch} actions with {} targets and {} input values",
            targets.len(),
            inputs.len()
        )));
    }
    let n_out = net.output_len();
    if let Some(a) = actions.iter().find(|a| a.index() >= n_out) {
        return Err(Error::InvalidArgument(format!("action {a} outside network output")));
    }
    let q = net.forward_batch(inputs, batch, &mut ws.batch);
    ws.d_out.clear();
    ws.d_out.resize(batch * n_out, 0.0);
    let scale = 1.0 / batch as f64;
    let mut loss = 0.0;
    for (b, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        let (l, dl) = loss_term(kind, q[b * n_out + a.index()] - y);
        loss += l;
        ws.d_out[b * n_out + a.index()] = dl * scale;
    }
    grads.clear();
    net.backward_batch(&ws.d_out, batch, &mut ws.batch, grads);
    Ok(loss * scale)
}

/// Allocating convenience wrapper around [`loss_and_gradients_into`].
pub fn loss_and_gradients(
    net: &Network,
    features: &[Vec<f64>],
    actions: &[ActionIndex],
    targets: &[f64],
    kind: LossKind,
) -> Result<(f64, Gradients)> {
    if features.len() != actions.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} actions",
            features.len(),
            actions.len()
        )));
    }
    let mut flat = Vec::with_capacity(features.len() * net.input_len());
    for row in features {
        net.check_input(row)?;
        flat.extend_from_slice(row);
    }
    let mut grads = Gradients::zeros_like(net);
    let mut ws = LossWorkspace::default();
    let loss = loss_and_gradients_into(net, &flat, actions, targets, kind, &mut ws, &mut grads)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests;
