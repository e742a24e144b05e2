//! Reverse-mode automatic differentiation over a flat operation tape.
//!
//! A [`Tape`] owns every tensor produced during one forward pass. Operations
//! append nodes in execution order, so the node list is already a topological
//! order and [`Tape::backward`] is a single reverse sweep that visits each
//! node exactly once. Gradients accumulate per tensor slot; slots created
//! from plain inputs skip gradient work unless some upstream slot needs it.
//!
//! The operator set is exactly what the omni-scale models require: same-length
//! 1-D convolution, per-channel batch normalization, ReLU, channel
//! concatenation, elementwise add, global average pooling, an affine
//! classifier head, and softmax cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{arg_err, shape_err, Tensor, TensorError};

type Result<T> = core::result::Result<T, TensorError>;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Handle to one tensor slot on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Running batch-normalization statistics, owned by the model (they are
/// state, not tape-local activations).
#[derive(Debug, Clone, PartialEq)]
pub struct BnRunning {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnRunning {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

struct Slot {
    tensor: Tensor,
    requires_grad: bool,
}

enum Op {
    Conv1d {
        x: Var,
        w: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        /// Normalized activations, kept for the gradient of gamma and x.
        x_hat: Vec<f64>,
        /// Per-channel 1/sqrt(var + eps) used in the forward pass.
        inv_std: Vec<f64>,
        /// Whether batch statistics (train) or running statistics (eval)
        /// were used; the backward formulas differ.
        batch_stats: bool,
    },
    Relu {
        x: Var,
    },
    ConcatChannels {
        parts: Vec<Var>,
    },
    Add {
        a: Var,
        b: Var,
    },
    GlobalAveragePool {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        bias: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node {
    op: Op,
    out: Var,
}

/// Ordered record of one forward pass.
#[derive(Default)]
pub struct Tape {
    slots: Vec<Slot>,
    nodes: Vec<Node>,
}

/// Per-slot gradients produced by one backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor that does not need gradients (data batches).
    pub fn input(&mut self, tensor: Tensor) -> Var {
        self.push_slot(tensor, false)
    }

    /// Registers a trainable tensor; its gradient is available after
    /// [`Tape::backward`].
    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.push_slot(tensor, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.slots[v.0].tensor
    }

    fn push_slot(&mut self, tensor: Tensor, requires_grad: bool) -> Var {
        self.slots.push(Slot {
            tensor,
            requires_grad,
        });
        Var(self.slots.len() - 1)
    }

    fn push_node(&mut self, op: Op, out: Tensor, requires_grad: bool) -> Var {
        let out = self.push_slot(out, requires_grad);
        if requires_grad {
            self.nodes.push(Node { op, out });
        }
        out
    }

    fn needs_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.slots[v.0].requires_grad)
    }

    /// Same-length 1-D cross-correlation at stride 1. Input is
    /// `(batch, in_channels, length)`, weights `(out_channels, in_channels,
    /// kernel)`; zero padding puts `⌊(k−1)/2⌋` on the left and `⌈(k−1)/2⌉`
    /// on the right so the output keeps the input length.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Result<Var> {
        let (batch, in_ch, len) = self.value(x).dims3()?;
        let (out_ch, w_in, kernel) = self.value(w).dims3()?;
        if w_in != in_ch {
            return Err(shape_err(alloc::format!(
                "conv weights expect {w_in} input channels, activation has {in_ch}"
            )));
        }
        if kernel == 0 {
            return Err(arg_err("zero kernel size"));
        }
        if len + kernel.saturating_sub(1) < kernel {
            return Err(arg_err("kernel longer than the padded input"));
        }
        let mut out = vec![0.0; batch * out_ch * len];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            for b in 0..batch {
                for o in 0..out_ch {
                    let out_row = &mut out[(b * out_ch + o) * len..(b * out_ch + o + 1) * len];
                    for i in 0..in_ch {
                        let x_row = &xv[(b * in_ch + i) * len..(b * in_ch + i + 1) * len];
                        let w_row = &wv[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
                        accumulate_correlation(out_row, x_row, w_row, kernel);
                    }
                }
            }
        }
        let rg = self.needs_grad(&[x, w]);
        Ok(self.push_node(
            Op::Conv1d { x, w },
            Tensor::new(vec![batch, out_ch, len], out)?,
            rg,
        ))
    }

    /// Per-channel batch normalization with affine parameters. Training mode
    /// normalizes with batch statistics over `(batch, length)` and folds them
    /// into `running` (momentum 0.1, unbiased variance); eval mode uses the
    /// running statistics unchanged.
    pub fn batchnorm1d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut BnRunning,
        phase: Phase,
    ) -> Result<Var> {
        let (batch, channels, len) = self.value(x).dims3()?;
        if self.value(gamma).shape() != [channels] || self.value(beta).shape() != [channels] {
            return Err(shape_err(alloc::format!(
                "batchnorm affine parameters must have shape [{channels}]"
            )));
        }
        if running.mean.len() != channels {
            return Err(shape_err("running statistics channel count mismatch"));
        }
        let n = batch * len;
        if matches!(phase, Phase::Train) && n < 2 {
            return Err(TensorError::DegenerateBatch(n));
        }
        let mut x_hat = vec![0.0; batch * channels * len];
        let mut inv_std = vec![0.0; channels];
        let mut out = vec![0.0; batch * channels * len];
        {
            let xv = self.value(x).data();
            let g = self.value(gamma).data();
            let be = self.value(beta).data();
            for c in 0..channels {
                let (mean, istd) = match phase {
                    Phase::Train => {
                        let mut sum = 0.0;
                        for b in 0..batch {
                            let row = &xv[(b * channels + c) * len..(b * channels + c + 1) * len];
                            sum += row.iter().sum::<f64>();
                        }
                        let mean = sum / n as f64;
                        let mut sq = 0.0;
                        for b in 0..batch {
                            let row = &xv[(b * channels + c) * len..(b * channels + c + 1) * len];
                            sq += row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                        }
                        let var = sq / n as f64;
                        let unbiased = if n > 1 { sq / (n - 1) as f64 } else { var };
                        running.mean[c] = (1.0 - BN_MOMENTUM) * running.mean[c] + BN_MOMENTUM * mean;
                        running.var[c] = (1.0 - BN_MOMENTUM) * running.var[c] + BN_MOMENTUM * unbiased;
                        (mean, 1.0 / libm::sqrt(var + BN_EPS))
                    }
                    Phase::Eval => (
                        running.mean[c],
                        1.0 / libm::sqrt(running.var[c] + BN_EPS),
                    ),
                };
                inv_std[c] = istd;
                for b in 0..batch {
                    let base = (b * channels + c) * len;
                    for t in 0..len {
                        let xh = (xv[base + t] - mean) * istd;
                        x_hat[base + t] = xh;
                        out[base + t] = g[c] * xh + be[c];
                    }
                }
            }
        }
        let rg = self.needs_grad(&[x, gamma, beta]);
        Ok(self.push_node(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                batch_stats: matches!(phase, Phase::Train),
            },
            Tensor::new(vec![batch, channels, len], out)?,
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push_node(Op::Relu { x }, Tensor::new(shape, out)?, rg))
    }

    /// Joins `(batch, cᵢ, length)` activations along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(arg_err("concat of zero tensors"));
        }
        let (batch, _, len) = self.value(parts[0]).dims3()?;
        let mut channels = 0;
        for &p in parts {
            let (b, c, l) = self.value(p).dims3()?;
            if b != batch || l != len {
                return Err(shape_err("concat parts disagree on batch or length"));
            }
            channels += c;
        }
        let mut out = vec![0.0; batch * channels * len];
        for b in 0..batch {
            let mut offset = 0;
            for &p in parts {
                let (_, c, _) = self.value(p).dims3()?;
                let src = &self.value(p).data()[b * c * len..(b + 1) * c * len];
                out[(b * channels + offset) * len..(b * channels + offset + c) * len]
                    .copy_from_slice(src);
                offset += c;
            }
        }
        let rg = self.needs_grad(parts);
        Ok(self.push_node(
            Op::ConcatChannels {
                parts: parts.to_vec(),
            },
            Tensor::new(vec![batch, channels, len], out)?,
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(alloc::format!(
                "add of shapes {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push_node(Op::Add { a, b }, Tensor::new(shape, out)?, rg))
    }

    /// Per-channel mean over the time axis: `(b, c, l) → (b, c)`.
    pub fn global_average_pool(&mut self, x: Var) -> Result<Var> {
        let (batch, channels, len) = self.value(x).dims3()?;
        if len == 0 {
            return Err(arg_err("global average pool over empty length"));
        }
        let mut out = vec![0.0; batch * channels];
        let xv = self.value(x).data();
        for b in 0..batch {
            for c in 0..channels {
                let row = &xv[(b * channels + c) * len..(b * channels + c + 1) * len];
                out[b * channels + c] = row.iter().sum::<f64>() / len as f64;
            }
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push_node(
            Op::GlobalAveragePool { x },
            Tensor::new(vec![batch, channels], out)?,
            rg,
        ))
    }

    /// Affine map `(b, f) × (o, f) + (o,) → (b, o)`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let (batch, features) = self.value(x).dims2()?;
        let (out_f, w_in) = self.value(w).dims2()?;
        if w_in != features || self.value(bias).shape() != [out_f] {
            return Err(shape_err(alloc::format!(
                "linear expects x(b,{w_in}) w({out_f},{w_in}) bias[{out_f}]"
            )));
        }
        let mut out = vec![0.0; batch * out_f];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(bias).data();
        for b in 0..batch {
            for o in 0..out_f {
                let mut acc = bv[o];
                let xr = &xv[b * features..(b + 1) * features];
                let wr = &wv[o * features..(o + 1) * features];
                for (xi, wi) in xr.iter().zip(wr) {
                    acc += xi * wi;
                }
                out[b * out_f + o] = acc;
            }
        }
        let rg = self.needs_grad(&[x, w, bias]);
        Ok(self.push_node(
            Op::Linear { x, w, bias },
            Tensor::new(vec![batch, out_f], out)?,
            rg,
        ))
    }

    /// Mean over the batch of `−log softmax(logits)[label]`, as a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (batch, classes) = self.value(logits).dims2()?;
        if labels.len() != batch {
            return Err(shape_err(alloc::format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(arg_err(alloc::format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let mut probs = vec![0.0; batch * classes];
        let mut loss = 0.0;
        {
            let zv = self.value(logits).data();
            for b in 0..batch {
                let row = &zv[b * classes..(b + 1) * classes];
                let max = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                let mut sum = 0.0;
                for (p, &z) in probs[b * classes..(b + 1) * classes].iter_mut().zip(row) {
                    *p = libm::exp(z - max);
                    sum += *p;
                }
                for p in &mut probs[b * classes..(b + 1) * classes] {
                    *p /= sum;
                }
                loss -= libm::log(probs[b * classes + labels[b]]);
            }
        }
        loss /= batch as f64;
        let rg = self.needs_grad(&[logits]);
        Ok(self.push_node(
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            Tensor::scalar(loss),
            rg,
        ))
    }

    /// Reverse sweep from a scalar loss. Nodes are visited in reverse
    /// insertion order, which is a reverse topological order by construction.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(arg_err("backward starts from a scalar"));
        }
        self.backward_with_seed(loss, Tensor::scalar(1.0))
    }

    /// Reverse sweep from an arbitrary output with an explicit cotangent.
    pub fn backward_with_seed(&self, out: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.value(out).shape() {
            return Err(shape_err("seed must match the output shape"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.slots.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for node in self.nodes.iter().rev() {
            let Some(out_grad) = grads[node.out.0].take() else {
                continue;
            };
            self.backprop_node(node, &out_grad, &mut grads)?;
            grads[node.out.0] = Some(out_grad);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: &[f64]) {
        if !self.slots[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0]
            .get_or_insert_with(|| Tensor::zeros(self.value(v).shape().to_vec()));
        for (g, d) in slot.data_mut().iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn backprop_node(
        &self,
        node: &Node,
        out_grad: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        match &node.op {
            Op::Conv1d { x, w } => {
                let (batch, in_ch, len) = self.value(*x).dims3()?;
                let (out_ch, _, kernel) = self.value(*w).dims3()?;
                let g = out_grad.data();
                if self.slots[x.0].requires_grad {
                    let mut dx = vec![0.0; batch * in_ch * len];
                    let wv = self.value(*w).data();
                    for b in 0..batch {
                        for o in 0..out_ch {
                            let g_row = &g[(b * out_ch + o) * len..(b * out_ch + o + 1) * len];
                            for i in 0..in_ch {
                                let dx_row =
                                    &mut dx[(b * in_ch + i) * len..(b * in_ch + i + 1) * len];
                                let w_row =
                                    &wv[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
                                accumulate_correlation_transpose(dx_row, g_row, w_row, kernel);
                            }
                        }
                    }
                    self.accumulate(grads, *x, &dx);
                }
                if self.slots[w.0].requires_grad {
                    let mut dw = vec![0.0; out_ch * in_ch * kernel];
                    let xv = self.value(*x).data();
                    for b in 0..batch {
                        for o in 0..out_ch {
                            let g_row = &g[(b * out_ch + o) * len..(b * out_ch + o + 1) * len];
                            for i in 0..in_ch {
                                let x_row =
                                    &xv[(b * in_ch + i) * len..(b * in_ch + i + 1) * len];
                                let dw_row =
                                    &mut dw[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
                                accumulate_weight_grad(dw_row, g_row, x_row, kernel);
                            }
                        }
                    }
                    self.accumulate(grads, *w, &dw);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                batch_stats,
            } => {
                let (batch, channels, len) = self.value(*x).dims3()?;
                let n = (batch * len) as f64;
                let g = out_grad.data();
                let gam = self.value(*gamma).data();
                if self.slots[gamma.0].requires_grad {
                    let mut dgamma = vec![0.0; channels];
                    for b in 0..batch {
                        for c in 0..channels {
                            let base = (b * channels + c) * len;
                            for t in 0..len {
                                dgamma[c] += g[base + t] * x_hat[base + t];
                            }
                        }
                    }
                    self.accumulate(grads, *gamma, &dgamma);
                }
                if self.slots[beta.0].requires_grad {
                    let mut dbeta = vec![0.0; channels];
                    for b in 0..batch {
                        for c in 0..channels {
                            let base = (b * channels + c) * len;
                            for t in 0..len {
                                dbeta[c] += g[base + t];
                            }
                        }
                    }
                    self.accumulate(grads, *beta, &dbeta);
                }
                if self.slots[x.0].requires_grad {
                    let mut dx = vec![0.0; batch * channels * len];
                    if *batch_stats {
                        // x was normalized with statistics computed from this
                        // batch, so the mean and variance paths contribute.
                        for c in 0..channels {
                            let mut sum_g = 0.0;
                            let mut sum_gx = 0.0;
                            for b in 0..batch {
                                let base = (b * channels + c) * len;
                                for t in 0..len {
                                    sum_g += g[base + t];
                                    sum_gx += g[base + t] * x_hat[base + t];
                                }
                            }
                            let scale = gam[c] * inv_std[c] / n;
                            for b in 0..batch {
                                let base = (b * channels + c) * len;
                                for t in 0..len {
                                    dx[base + t] = scale
                                        * (n * g[base + t] - sum_g - x_hat[base + t] * sum_gx);
                                }
                            }
                        }
                    } else {
                        for c in 0..channels {
                            let scale = gam[c] * inv_std[c];
                            for b in 0..batch {
                                let base = (b * channels + c) * len;
                                for t in 0..len {
                                    dx[base + t] = scale * g[base + t];
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *x, &dx);
                }
            }
            Op::Relu { x } => {
                let out = self.value(node.out).data();
                let dx: Vec<f64> = out_grad
                    .data()
                    .iter()
                    .zip(out)
                    .map(|(&g, &o)| if o > 0.0 { g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::ConcatChannels { parts } => {
                let (batch, channels, len) = self.value(node.out).dims3()?;
                let g = out_grad.data();
                let mut offset = 0;
                for &p in parts {
                    let (_, c, _) = self.value(p).dims3()?;
                    if self.slots[p.0].requires_grad {
                        let mut dp = vec![0.0; batch * c * len];
                        for b in 0..batch {
                            dp[b * c * len..(b + 1) * c * len].copy_from_slice(
                                &g[(b * channels + offset) * len
                                    ..(b * channels + offset + c) * len],
                            );
                        }
                        self.accumulate(grads, p, &dp);
                    }
                    offset += c;
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, out_grad.data());
                self.accumulate(grads, *b, out_grad.data());
            }
            Op::GlobalAveragePool { x } => {
                let (batch, channels, len) = self.value(*x).dims3()?;
                let g = out_grad.data();
                let mut dx = vec![0.0; batch * channels * len];
                for b in 0..batch {
                    for c in 0..channels {
                        let gv = g[b * channels + c] / len as f64;
                        let base = (b * channels + c) * len;
                        for t in 0..len {
                            dx[base + t] = gv;
                        }
                    }
                }
                self.accumulate(grads, *x, &dx);
            }
            Op::Linear { x, w, bias } => {
                let (batch, features) = self.value(*x).dims2()?;
                let (out_f, _) = self.value(*w).dims2()?;
                let g = out_grad.data();
                if self.slots[x.0].requires_grad {
                    let mut dx = vec![0.0; batch * features];
                    let wv = self.value(*w).data();
                    for b in 0..batch {
                        for o in 0..out_f {
                            let gv = g[b * out_f + o];
                            let wr = &wv[o * features..(o + 1) * features];
                            for (d, wi) in dx[b * features..(b + 1) * features]
                                .iter_mut()
                                .zip(wr)
                            {
                                *d += gv * wi;
                            }
                        }
                    }
                    self.accumulate(grads, *x, &dx);
                }
                if self.slots[w.0].requires_grad {
                    let mut dw = vec![0.0; out_f * features];
                    let xv = self.value(*x).data();
                    for b in 0..batch {
                        for o in 0..out_f {
                            let gv = g[b * out_f + o];
                            let xr = &xv[b * features..(b + 1) * features];
                            for (d, xi) in dw[o * features..(o + 1) * features]
                                .iter_mut()
                                .zip(xr)
                            {
                                *d += gv * xi;
                            }
                        }
                    }
                    self.accumulate(grads, *w, &dw);
                }
                if self.slots[bias.0].requires_grad {
                    let mut db = vec![0.0; out_f];
                    for b in 0..batch {
                        for o in 0..out_f {
                            db[o] += g[b * out_f + o];
                        }
                    }
                    self.accumulate(grads, *bias, &db);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let (batch, classes) = self.value(*logits).dims2()?;
                let scale = out_grad.item() / batch as f64;
                let mut dz = probs.clone();
                for (b, &label) in labels.iter().enumerate() {
                    dz[b * classes + label] -= 1.0;
                }
                for d in &mut dz {
                    *d *= scale;
                }
                self.accumulate(grads, *logits, &dz);
            }
        }
        Ok(())
    }
}

/// `out[t] += Σ_κ w[κ] · x[t + κ − pad_left]`, zeros outside the input.
fn accumulate_correlation(out: &mut [f64], x: &[f64], w: &[f64], kernel: usize) {
    let len = out.len();
    let pad_left = (kernel - 1) / 2;
    for (kappa, &wv) in w.iter().enumerate() {
        let shift = kappa as isize - pad_left as isize;
        let t_lo = (-shift).max(0) as usize;
        let t_hi = (len as isize).min(len as isize - shift).max(0) as usize;
        if t_lo >= t_hi {
            continue;
        }
        let src = &x[(t_lo as isize + shift) as usize..(t_hi as isize + shift) as usize];
        for (o, s) in out[t_lo..t_hi].iter_mut().zip(src) {
            *o += wv * s;
        }
    }
}

/// Input-gradient counterpart: `dx[t + κ − pad_left] += w[κ] · g[t]`.
fn accumulate_correlation_transpose(dx: &mut [f64], g: &[f64], w: &[f64], kernel: usize) {
    let len = dx.len();
    let pad_left = (kernel - 1) / 2;
    for (kappa, &wv) in w.iter().enumerate() {
        let shift = kappa as isize - pad_left as isize;
        let t_lo = (-shift).max(0) as usize;
        let t_hi = (len as isize).min(len as isize - shift).max(0) as usize;
        if t_lo >= t_hi {
            continue;
        }
        let dst = &mut dx[(t_lo as isize + shift) as usize..(t_hi as isize + shift) as usize];
        for (d, gv) in dst.iter_mut().zip(&g[t_lo..t_hi]) {
            *d += wv * gv;
        }
    }
}

/// Weight-gradient counterpart: `dw[κ] += Σ_t g[t] · x[t + κ − pad_left]`.
fn accumulate_weight_grad(dw: &mut [f64], g: &[f64], x: &[f64], kernel: usize) {
    let len = g.len();
    let pad_left = (kernel - 1) / 2;
    for (kappa, d) in dw.iter_mut().enumerate() {
        let shift = kappa as isize - pad_left as isize;
        let t_lo = (-shift).max(0) as usize;
        let t_hi = (len as isize).min(len as isize - shift).max(0) as usize;
        if t_lo >= t_hi {
            continue;
        }
        let src = &x[(t_lo as isize + shift) as usize..(t_hi as isize + shift) as usize];
        let mut acc = 0.0;
        for (gv, xv) in g[t_lo..t_hi].iter().zip(src) {
            acc += gv * xv;
        }
        *d += acc;
    }
}
