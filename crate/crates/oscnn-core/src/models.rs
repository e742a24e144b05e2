//! The omni-scale model family and its fixed-kernel baseline.
//!
//! Every model here is a stack of convolution blocks followed by global
//! average pooling and one fully connected classifier:
//!
//! * `OsCnn`: one omni-scale block.
//! * `OsCnnRes(k)`: `k` stacked omni-scale blocks; blocks after the first
//!   add their input through a skip path (kernel-1 projection when channel
//!   counts differ) before the final ReLU.
//! * `MosCnn`: one omni-scale block per variate with independent weights,
//!   channel-concatenated into a trunk omni-scale block.
//! * `Fcn`: the three-layer fixed-kernel reference (kernels 8/5/3, channels
//!   128/256/128) whose convolution weight count anchors every budget.
//! * `FcnScaled`: the reference with kernels scaled by a common factor,
//!   either keeping channels fixed or re-solving them to hold the weight
//!   count near the reference.
//!
//! Channel counts for omni-scale blocks are solved from a weight budget so
//! comparisons against the baseline are size-matched.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{BnRunning, Phase, Tape, Var};
use crate::kernel_config::{
    allocate_channels, canonical_kernel_lists, count_block_weights, prime_bound_for_target,
    select_prime_bound, ConfigError, OsBlockSpec,
};
use crate::tensor::{Tensor, TensorError};

pub const FCN_KERNELS: [usize; 3] = [8, 5, 3];
pub const FCN_CHANNELS: [usize; 3] = [128, 256, 128];
/// Convolution weight count of the univariate reference baseline.
pub const FCN_REFERENCE_WEIGHTS: u64 = 263_168;
/// Relative slack allowed when re-solving channels at a fixed model size.
pub const FIXED_SIZE_TOLERANCE: f64 = 0.02;

/// Architecture conventions recorded in every run fingerprint.
pub const ARCH_NOTES: [(&str, &str); 3] = [
    ("init", "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); batchnorm gamma=1 beta=0; fc bias=0"),
    ("batchnorm", "applied to the channel concatenation of each layer, before relu"),
    ("residual", "skip added after the last layer's batchnorm, before the final relu"),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

type Result<T> = core::result::Result<T, ModelError>;

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidArgument(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum ScaleMode {
    FixedChannels,
    FixedSize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum ModelKind {
    OsCnn,
    OsCnnRes { depth: usize },
    MosCnn,
    Fcn,
    FcnScaled { rf_scale: f64, mode: ScaleMode },
}

/// Resolved layer structure, independent of weight values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Architecture {
    /// Sequential omni-scale blocks (one for `OsCnn`, `k` for `OsCnnRes`).
    OsBlocks { blocks: Vec<OsBlockSpec> },
    /// One block per variate feeding a trunk block (`MosCnn`).
    PerVariate {
        variate_block: OsBlockSpec,
        trunk: Vec<OsBlockSpec>,
    },
    /// Single-kernel layers as `(kernel, out_channels)` (`Fcn*`).
    Plain { layers: Vec<(usize, usize)> },
}

/// Fully resolved model genotype: everything needed to rebuild the network
/// except the random seed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub arch: Architecture,
    pub n_classes: usize,
    pub n_variates: usize,
    pub series_len: usize,
    /// When set, kernel planning targets this receptive field instead of
    /// `⌈series_len/2⌉`.
    pub rf_override: Option<usize>,
    /// Weight budget each omni-scale block was solved under.
    pub weight_budget: u64,
}

/// Convolution weight count of the fixed-kernel baseline for a given input
/// channel count.
pub fn fcn_conv_weight_count(n_variates: usize) -> u64 {
    let c = FCN_CHANNELS;
    let k = FCN_KERNELS;
    (n_variates * c[0] * k[0] + c[0] * c[1] * k[1] + c[1] * c[2] * k[2]) as u64
}

/// Kernel scale that gives the baseline a receptive field of `rf`
/// (the reference kernels sum to 16, so `rf = 16·scale − 2`).
pub fn fcn_scale_for_rf(rf: usize) -> f64 {
    (rf as f64 + 2.0) / 16.0
}

fn round_half_up(x: f64) -> i64 {
    libm::floor(x + 0.5) as i64
}

fn scaled_fcn_kernels(rf_scale: f64) -> Result<[usize; 3]> {
    if !(rf_scale.is_finite() && rf_scale > 0.0) {
        return Err(invalid("kernel scale must be positive"));
    }
    let mut out = [0usize; 3];
    for (o, &base) in out.iter_mut().zip(&FCN_KERNELS) {
        let k = round_half_up(base as f64 * rf_scale);
        if k < 1 {
            return Err(invalid(format!(
                "kernel scale {rf_scale} drives a kernel below 1"
            )));
        }
        *o = k as usize;
    }
    Ok(out)
}

fn plain_conv_weights(layers: &[(usize, usize)], in_channels: usize) -> u64 {
    let mut total = 0u64;
    let mut in_ch = in_channels;
    for &(k, c) in layers {
        total += (in_ch * c * k) as u64;
        in_ch = c;
    }
    total
}

/// Channel counts for a scaled baseline that keep the convolution weight
/// count within [`FIXED_SIZE_TOLERANCE`] of the reference, preserving the
/// 1:2:1 channel ratio.
fn solve_fixed_size_channels(kernels: [usize; 3], n_variates: usize) -> Result<[usize; 3]> {
    let reference = fcn_conv_weight_count(n_variates) as f64;
    let b = FCN_CHANNELS.map(|c| c as f64);
    let quad = b[0] * b[1] * kernels[1] as f64 + b[1] * b[2] * kernels[2] as f64;
    let lin = (n_variates as f64) * b[0] * kernels[0] as f64;
    let s0 = (-lin + libm::sqrt(lin * lin + 4.0 * quad * reference)) / (2.0 * quad);
    let mut best: Option<([usize; 3], f64)> = None;
    let mut s = s0 * 0.95;
    while s <= s0 * 1.05 {
        let ch = [
            (round_half_up(b[0] * s).max(1)) as usize,
            (round_half_up(b[1] * s).max(1)) as usize,
            (round_half_up(b[2] * s).max(1)) as usize,
        ];
        let layers = [(kernels[0], ch[0]), (kernels[1], ch[1]), (kernels[2], ch[2])];
        let count = plain_conv_weights(&layers, n_variates) as f64;
        let err = (count - reference).abs() / reference;
        if best.map_or(true, |(_, e)| err < e) {
            best = Some((ch, err));
        }
        s += s0 * 1e-4;
    }
    let (channels, err) = best.unwrap();
    if err > FIXED_SIZE_TOLERANCE {
        return Err(invalid(format!(
            "no channel setting within {FIXED_SIZE_TOLERANCE:.0e} of the reference size (best {err:.4})"
        )));
    }
    Ok(channels)
}

impl ModelSpec {
    fn check_classes_variates(n_classes: usize, n_variates: usize) -> Result<()> {
        if n_classes < 2 {
            return Err(invalid("classification needs at least two classes"));
        }
        if n_variates < 1 {
            return Err(invalid("at least one variate required"));
        }
        Ok(())
    }

    fn canonical_lists(series_len: usize, rf_override: Option<usize>) -> Result<Vec<Vec<usize>>> {
        let bound = match rf_override {
            Some(rf) => prime_bound_for_target(rf)?,
            None => select_prime_bound(series_len as u64)?,
        };
        Ok(canonical_kernel_lists(bound)?)
    }

    /// A single omni-scale block sized under `weight_budget` (the
    /// variate-matched baseline size when `None`), then pooling and a
    /// classifier.
    pub fn os_cnn(
        n_variates: usize,
        n_classes: usize,
        series_len: usize,
        rf_override: Option<usize>,
        weight_budget: Option<u64>,
    ) -> Result<Self> {
        Self::os_cnn_res(1, n_variates, n_classes, series_len, rf_override, weight_budget)
    }

    /// `depth` stacked omni-scale blocks with residual skips after the first.
    pub fn os_cnn_res(
        depth: usize,
        n_variates: usize,
        n_classes: usize,
        series_len: usize,
        rf_override: Option<usize>,
        weight_budget: Option<u64>,
    ) -> Result<Self> {
        Self::check_classes_variates(n_classes, n_variates)?;
        if !(1..=3).contains(&depth) {
            return Err(invalid("supported residual depths are 1, 2 and 3"));
        }
        let budget = weight_budget.unwrap_or_else(|| fcn_conv_weight_count(n_variates));
        let lists = Self::canonical_lists(series_len, rf_override)?;
        let mut blocks = Vec::with_capacity(depth);
        let mut in_ch = n_variates;
        for _ in 0..depth {
            let channels = allocate_channels(budget, &lists, in_ch)?;
            let block = OsBlockSpec::new(lists.clone(), channels, in_ch)?;
            in_ch = block.out_channels();
            blocks.push(block);
        }
        Ok(Self {
            kind: if depth == 1 {
                ModelKind::OsCnn
            } else {
                ModelKind::OsCnnRes { depth }
            },
            arch: Architecture::OsBlocks { blocks },
            n_classes,
            n_variates,
            series_len,
            rf_override,
            weight_budget: budget,
        })
    }

    /// One omni-scale block per variate (independent weights, solved under
    /// the univariate baseline size), concatenated into a trunk block.
    pub fn mos_cnn(
        n_variates: usize,
        n_classes: usize,
        series_len: usize,
        rf_override: Option<usize>,
        weight_budget: Option<u64>,
    ) -> Result<Self> {
        Self::check_classes_variates(n_classes, n_variates)?;
        if n_variates < 2 {
            return Err(invalid("per-variate blocks need at least two variates"));
        }
        let lists = Self::canonical_lists(series_len, rf_override)?;
        let variate_budget = weight_budget.unwrap_or(fcn_conv_weight_count(1));
        let vc = allocate_channels(variate_budget, &lists, 1)?;
        let variate_block = OsBlockSpec::new(lists.clone(), vc, 1)?;
        let trunk_in = n_variates * variate_block.out_channels();
        let trunk_budget = weight_budget.unwrap_or_else(|| fcn_conv_weight_count(n_variates));
        let tc = allocate_channels(trunk_budget, &lists, trunk_in)?;
        let trunk = vec![OsBlockSpec::new(lists, tc, trunk_in)?];
        Ok(Self {
            kind: ModelKind::MosCnn,
            arch: Architecture::PerVariate {
                variate_block,
                trunk,
            },
            n_classes,
            n_variates,
            series_len,
            rf_override,
            weight_budget: trunk_budget,
        })
    }

    /// The fixed-kernel reference baseline.
    pub fn fcn(n_variates: usize, n_classes: usize, series_len: usize) -> Result<Self> {
        Self::check_classes_variates(n_classes, n_variates)?;
        let layers = FCN_KERNELS
            .iter()
            .zip(&FCN_CHANNELS)
            .map(|(&k, &c)| (k, c))
            .collect();
        Ok(Self {
            kind: ModelKind::Fcn,
            arch: Architecture::Plain { layers },
            n_classes,
            n_variates,
            series_len,
            rf_override: None,
            weight_budget: fcn_conv_weight_count(n_variates),
        })
    }

    /// The baseline with kernels scaled by `rf_scale`, preserving the 8:5:3
    /// kernel ratio. `FixedChannels` keeps 128/256/128; `FixedSize` re-solves
    /// the channels to stay within 2% of the reference weight count.
    pub fn fcn_scaled(
        n_variates: usize,
        n_classes: usize,
        series_len: usize,
        rf_scale: f64,
        mode: ScaleMode,
    ) -> Result<Self> {
        Self::check_classes_variates(n_classes, n_variates)?;
        let kernels = scaled_fcn_kernels(rf_scale)?;
        let channels = match mode {
            ScaleMode::FixedChannels => FCN_CHANNELS,
            ScaleMode::FixedSize => solve_fixed_size_channels(kernels, n_variates)?,
        };
        let layers = kernels.iter().zip(&channels).map(|(&k, &c)| (k, c)).collect();
        Ok(Self {
            kind: ModelKind::FcnScaled { rf_scale, mode },
            arch: Architecture::Plain { layers },
            n_classes,
            n_variates,
            series_len,
            rf_override: None,
            weight_budget: fcn_conv_weight_count(n_variates),
        })
    }

    /// Convolution weight count implied by the architecture (analytic, no
    /// weights materialized). Skip projections are excluded: they depend on
    /// runtime channel matching, see [`Network::conv_weight_count`].
    pub fn block_conv_weights(&self) -> u64 {
        match &self.arch {
            Architecture::OsBlocks { blocks } => blocks
                .iter()
                .map(|b| count_block_weights(b).total_weights)
                .sum(),
            Architecture::PerVariate {
                variate_block,
                trunk,
            } => {
                self.n_variates as u64 * count_block_weights(variate_block).total_weights
                    + trunk
                        .iter()
                        .map(|b| count_block_weights(b).total_weights)
                        .sum::<u64>()
            }
            Architecture::Plain { layers } => plain_conv_weights(layers, self.n_variates),
        }
    }

    /// Weights of the residual skip projections (kernel-1 convolutions
    /// inserted when a block's input and output channel counts differ).
    pub fn skip_projection_weights(&self) -> u64 {
        match &self.arch {
            Architecture::OsBlocks { blocks } => blocks
                .iter()
                .skip(1)
                .filter(|b| b.in_channels != b.out_channels())
                .map(|b| (b.in_channels * b.out_channels()) as u64)
                .sum(),
            _ => 0,
        }
    }

    /// Channels feeding the classifier head.
    pub fn head_in_channels(&self) -> usize {
        match &self.arch {
            Architecture::OsBlocks { blocks } => blocks.last().unwrap().out_channels(),
            Architecture::PerVariate { trunk, .. } => trunk.last().unwrap().out_channels(),
            Architecture::Plain { layers } => layers.last().unwrap().1,
        }
    }

    /// Largest receptive field reachable by one path through the stacked
    /// blocks.
    pub fn max_receptive_field(&self) -> usize {
        let per_block = |b: &OsBlockSpec| count_block_weights(b).max_rf - 1;
        match &self.arch {
            Architecture::OsBlocks { blocks } => {
                1 + blocks.iter().map(per_block).sum::<usize>()
            }
            Architecture::PerVariate {
                variate_block,
                trunk,
            } => 1 + per_block(variate_block) + trunk.iter().map(per_block).sum::<usize>(),
            Architecture::Plain { layers } => {
                1 + layers.iter().map(|&(k, _)| k - 1).sum::<usize>()
            }
        }
    }
}

/// One layer of parallel convolutions over a shared input, batch-normalized
/// after channel concatenation.
#[derive(Debug, Clone)]
struct ConvLayer {
    kernel_sizes: Vec<usize>,
    branch_channels: usize,
    weights: Vec<Tensor>,
    gamma: Tensor,
    beta: Tensor,
    running: BnRunning,
}

#[derive(Debug, Clone)]
enum Skip {
    None,
    Identity,
    Projection(Tensor),
}

#[derive(Debug, Clone)]
struct Block {
    layers: Vec<ConvLayer>,
    skip: Skip,
}

/// A built model: materialized weights plus the spec that produced them.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: ModelSpec,
    variate_blocks: Vec<Block>,
    blocks: Vec<Block>,
    fc_weight: Tensor,
    fc_bias: Tensor,
}

fn init_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("init shape")
}

fn build_conv_layer(
    kernel_sizes: &[usize],
    in_channels: usize,
    branch_channels: usize,
    rng: &mut ChaCha8Rng,
) -> ConvLayer {
    let weights = kernel_sizes
        .iter()
        .map(|&k| init_uniform(vec![branch_channels, in_channels, k], in_channels * k, rng))
        .collect();
    let out = branch_channels * kernel_sizes.len();
    ConvLayer {
        kernel_sizes: kernel_sizes.to_vec(),
        branch_channels,
        weights,
        gamma: Tensor::new(vec![out], vec![1.0; out]).unwrap(),
        beta: Tensor::zeros(vec![out]),
        running: BnRunning::new(out),
    }
}

fn build_block(spec: &OsBlockSpec, with_skip: bool, rng: &mut ChaCha8Rng) -> Block {
    let mut layers = Vec::with_capacity(spec.layer_kernel_lists.len());
    let mut in_ch = spec.in_channels;
    for list in &spec.layer_kernel_lists {
        let layer = build_conv_layer(list, in_ch, spec.branch_channels, rng);
        in_ch = layer.branch_channels * layer.kernel_sizes.len();
        layers.push(layer);
    }
    let skip = if !with_skip {
        Skip::None
    } else if spec.in_channels == spec.out_channels() {
        Skip::Identity
    } else {
        Skip::Projection(init_uniform(
            vec![spec.out_channels(), spec.in_channels, 1],
            spec.in_channels,
            rng,
        ))
    };
    Block { layers, skip }
}

fn build_plain_block(layers: &[(usize, usize)], in_channels: usize, rng: &mut ChaCha8Rng) -> Block {
    let mut built = Vec::with_capacity(layers.len());
    let mut in_ch = in_channels;
    for &(k, c) in layers {
        built.push(build_conv_layer(&[k], in_ch, c, rng));
        in_ch = c;
    }
    Block {
        layers: built,
        skip: Skip::None,
    }
}

/// Materializes a network from its spec with seeded initialization.
pub fn build_model(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Result<Network> {
    let (variate_blocks, blocks) = match &spec.arch {
        Architecture::OsBlocks { blocks } => {
            let built = blocks
                .iter()
                .enumerate()
                .map(|(i, b)| build_block(b, i > 0, rng))
                .collect();
            (Vec::new(), built)
        }
        Architecture::PerVariate {
            variate_block,
            trunk,
        } => {
            let variates = (0..spec.n_variates)
                .map(|_| build_block(variate_block, false, rng))
                .collect();
            let built = trunk.iter().map(|b| build_block(b, false, rng)).collect();
            (variates, built)
        }
        Architecture::Plain { layers } => {
            (Vec::new(), vec![build_plain_block(layers, spec.n_variates, rng)])
        }
    };
    let feat = spec.head_in_channels();
    Ok(Network {
        spec: spec.clone(),
        variate_blocks,
        blocks,
        fc_weight: init_uniform(vec![spec.n_classes, feat], feat, rng),
        fc_bias: Tensor::zeros(vec![spec.n_classes]),
    })
}

/// Registers model tensors on a tape, trainable or frozen.
struct Registrar<'a> {
    tape: &'a mut Tape,
    trainable: bool,
    vars: Vec<Var>,
}

impl<'a> Registrar<'a> {
    fn reg(&mut self, t: &Tensor) -> Var {
        let var = if self.trainable {
            self.tape.param(t.clone())
        } else {
            self.tape.input(t.clone())
        };
        self.vars.push(var);
        var
    }
}

/// Output of one differentiable forward pass.
pub struct ForwardPass {
    pub logits: Var,
    /// Tape handles of every trainable tensor, in [`Network::param_order`].
    pub param_vars: Vec<Var>,
}

impl Network {
    fn forward_block(
        block: &mut Block,
        reg: &mut Registrar,
        x: Var,
        phase: Phase,
    ) -> Result<Var> {
        let block_input = x;
        let mut cur = x;
        let last = block.layers.len() - 1;
        let needs_skip = !matches!(block.skip, Skip::None);
        // Skip weights register first to keep a stable parameter order.
        let proj_var = match &block.skip {
            Skip::Projection(w) => Some(reg.reg(w)),
            _ => None,
        };
        for (li, layer) in block.layers.iter_mut().enumerate() {
            let mut branches = Vec::with_capacity(layer.kernel_sizes.len());
            for w in &layer.weights {
                let wv = reg.reg(w);
                branches.push(reg.tape.conv1d(cur, wv)?);
            }
            let cat = if branches.len() == 1 {
                branches[0]
            } else {
                reg.tape.concat_channels(&branches)?
            };
            let gamma = reg.reg(&layer.gamma);
            let beta = reg.reg(&layer.beta);
            let bn = reg
                .tape
                .batchnorm1d(cat, gamma, beta, &mut layer.running, phase)?;
            let pre_act = if li == last && needs_skip {
                let skip = match proj_var {
                    Some(wv) => reg.tape.conv1d(block_input, wv)?,
                    None => block_input,
                };
                reg.tape.add(bn, skip)?
            } else {
                bn
            };
            cur = reg.tape.relu(pre_act)?;
        }
        Ok(cur)
    }

    fn run(
        &mut self,
        tape: &mut Tape,
        input: &Tensor,
        phase: Phase,
        trainable: bool,
    ) -> Result<ForwardPass> {
        let (batch, channels, len) = input.dims3()?;
        if channels != self.spec.n_variates {
            return Err(invalid(format!(
                "input has {channels} variates, model expects {}",
                self.spec.n_variates
            )));
        }
        let mut reg = Registrar {
            tape,
            trainable,
            vars: Vec::new(),
        };
        let mut cur = if self.variate_blocks.is_empty() {
            let x = reg.tape.input(input.clone());
            x
        } else {
            // Split the input per variate outside the tape; raw data needs no
            // gradient, so slicing up front is equivalent and cheaper.
            let mut outputs = Vec::with_capacity(self.variate_blocks.len());
            for (v, block) in self.variate_blocks.iter_mut().enumerate() {
                let mut single = vec![0.0; batch * len];
                for b in 0..batch {
                    let base = (b * channels + v) * len;
                    single[b * len..(b + 1) * len]
                        .copy_from_slice(&input.data()[base..base + len]);
                }
                let xv = reg.tape.input(Tensor::new(vec![batch, 1, len], single)?);
                outputs.push(Self::forward_block(block, &mut reg, xv, phase)?);
            }
            reg.tape.concat_channels(&outputs)?
        };
        if !self.variate_blocks.is_empty() || !self.blocks.is_empty() {
            for block in &mut self.blocks {
                cur = Self::forward_block(block, &mut reg, cur, phase)?;
            }
        }
        let pooled = reg.tape.global_average_pool(cur)?;
        let w = reg.reg(&self.fc_weight);
        let b = reg.reg(&self.fc_bias);
        let logits = reg.tape.linear(pooled, w, b)?;
        Ok(ForwardPass {
            logits,
            param_vars: reg.vars,
        })
    }

    /// Differentiable forward pass in training mode; returns the mean
    /// cross-entropy loss alongside logits and parameter handles.
    pub fn loss_forward(
        &mut self,
        tape: &mut Tape,
        input: &Tensor,
        labels: &[usize],
    ) -> Result<(Var, ForwardPass)> {
        let pass = self.run(tape, input, Phase::Train, true)?;
        let loss = tape.softmax_cross_entropy(pass.logits, labels)?;
        Ok((loss, pass))
    }

    /// Inference logits using running batch statistics; nothing is recorded
    /// for differentiation.
    pub fn eval_logits(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let pass = self.run(&mut tape, input, Phase::Eval, false)?;
        Ok(tape.value(pass.logits).clone())
    }

    /// Class probabilities in eval mode.
    pub fn predict_proba(&mut self, input: &Tensor) -> Result<Tensor> {
        let logits = self.eval_logits(input)?;
        Ok(crate::tensor::softmax_rows(&logits)?)
    }

    fn for_each_entry<'s>(&'s self, mut f: impl FnMut(String, Entry<'s>)) {
        let block_entries =
            |prefix: &str, block: &'s Block, f: &mut dyn FnMut(String, Entry<'s>)| {
                if let Skip::Projection(w) = &block.skip {
                    f(format!("{prefix}.skip.weight"), Entry::Param(w));
                }
                for (li, layer) in block.layers.iter().enumerate() {
                    for (w, &k) in layer.weights.iter().zip(&layer.kernel_sizes) {
                        f(format!("{prefix}.layer{li}.conv{k}.weight"), Entry::Param(w));
                    }
                    f(format!("{prefix}.layer{li}.bn.gamma"), Entry::Param(&layer.gamma));
                    f(format!("{prefix}.layer{li}.bn.beta"), Entry::Param(&layer.beta));
                    f(
                        format!("{prefix}.layer{li}.bn.running_mean"),
                        Entry::Buffer(&layer.running.mean),
                    );
                    f(
                        format!("{prefix}.layer{li}.bn.running_var"),
                        Entry::Buffer(&layer.running.var),
                    );
                }
            };
        for (v, block) in self.variate_blocks.iter().enumerate() {
            block_entries(&format!("variate{v}"), block, &mut f);
        }
        for (bi, block) in self.blocks.iter().enumerate() {
            block_entries(&format!("block{bi}"), block, &mut f);
        }
        f("fc.weight".into(), Entry::Param(&self.fc_weight));
        f("fc.bias".into(), Entry::Param(&self.fc_bias));
    }

    /// Trainable tensors in the order [`ForwardPass::param_vars`] uses.
    pub fn param_order(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_entry(|name, e| {
            if matches!(e, Entry::Param(_)) {
                names.push(name);
            }
        });
        names
    }

    /// Mutable references to the trainable tensors, in parameter order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        fn push_block<'a>(block: &'a mut Block, out: &mut Vec<&'a mut Tensor>) {
            if let Skip::Projection(w) = &mut block.skip {
                out.push(w);
            }
            for layer in &mut block.layers {
                for w in &mut layer.weights {
                    out.push(w);
                }
                out.push(&mut layer.gamma);
                out.push(&mut layer.beta);
            }
        }
        let mut out: Vec<&mut Tensor> = Vec::new();
        let Network {
            variate_blocks,
            blocks,
            fc_weight,
            fc_bias,
            ..
        } = self;
        for block in variate_blocks {
            push_block(block, &mut out);
        }
        for block in blocks {
            push_block(block, &mut out);
        }
        out.push(fc_weight);
        out.push(fc_bias);
        out
    }

    /// Named parameters and buffers with owned values, for checkpoints.
    pub fn export_state(&self) -> Vec<StateEntry> {
        let mut out = Vec::new();
        self.for_each_entry(|name, e| {
            let (shape, values) = match e {
                Entry::Param(t) => (t.shape().to_vec(), t.data().to_vec()),
                Entry::Buffer(v) => (vec![v.len()], v.clone()),
            };
            out.push(StateEntry {
                name,
                shape,
                values,
            });
        });
        out
    }

    /// Restores parameters and buffers from [`Network::export_state`] output.
    pub fn import_state(&mut self, entries: &[StateEntry]) -> Result<()> {
        let expected = self.export_state();
        if expected.len() != entries.len() {
            return Err(invalid(format!(
                "checkpoint holds {} tensors, model has {}",
                entries.len(),
                expected.len()
            )));
        }
        for (have, want) in entries.iter().zip(&expected) {
            if have.name != want.name || have.shape != want.shape {
                return Err(invalid(format!(
                    "checkpoint entry {} {:?} does not match model entry {} {:?}",
                    have.name, have.shape, want.name, want.shape
                )));
            }
        }
        let by_name: alloc::collections::BTreeMap<&str, &StateEntry> =
            entries.iter().map(|e| (e.name.as_str(), e)).collect();
        let Network {
            variate_blocks,
            blocks,
            fc_weight,
            fc_bias,
            ..
        } = self;
        let apply_block = |prefix: String, block: &mut Block| {
            if let Skip::Projection(w) = &mut block.skip {
                w.data_mut()
                    .copy_from_slice(&by_name[format!("{prefix}.skip.weight").as_str()].values);
            }
            for (li, layer) in block.layers.iter_mut().enumerate() {
                for (w, k) in layer.weights.iter_mut().zip(layer.kernel_sizes.clone()) {
                    w.data_mut().copy_from_slice(
                        &by_name[format!("{prefix}.layer{li}.conv{k}.weight").as_str()].values,
                    );
                }
                layer.gamma.data_mut().copy_from_slice(
                    &by_name[format!("{prefix}.layer{li}.bn.gamma").as_str()].values,
                );
                layer.beta.data_mut().copy_from_slice(
                    &by_name[format!("{prefix}.layer{li}.bn.beta").as_str()].values,
                );
                layer.running.mean.copy_from_slice(
                    &by_name[format!("{prefix}.layer{li}.bn.running_mean").as_str()].values,
                );
                layer.running.var.copy_from_slice(
                    &by_name[format!("{prefix}.layer{li}.bn.running_var").as_str()].values,
                );
            }
        };
        for (v, block) in variate_blocks.iter_mut().enumerate() {
            apply_block(format!("variate{v}"), block);
        }
        for (bi, block) in blocks.iter_mut().enumerate() {
            apply_block(format!("block{bi}"), block);
        }
        fc_weight
            .data_mut()
            .copy_from_slice(&by_name["fc.weight"].values);
        fc_bias
            .data_mut()
            .copy_from_slice(&by_name["fc.bias"].values);
        Ok(())
    }

    /// Convolution and classifier weight count: block convolutions, skip
    /// projections, and the fully connected matrix. BatchNorm parameters and
    /// biases are excluded, matching the planning cost model.
    pub fn conv_weight_count(&self) -> u64 {
        let mut total = 0u64;
        let mut count_block = |block: &Block| {
            if let Skip::Projection(w) = &block.skip {
                total += w.len() as u64;
            }
            for layer in &block.layers {
                total += layer.weights.iter().map(|w| w.len() as u64).sum::<u64>();
            }
        };
        for b in &self.variate_blocks {
            count_block(b);
        }
        for b in &self.blocks {
            count_block(b);
        }
        total
    }

    /// Weight count including the classifier matrix (bias and BatchNorm
    /// still excluded).
    pub fn weight_count(&self) -> u64 {
        self.conv_weight_count() + self.fc_weight.len() as u64
    }

    /// Every trainable scalar, for reporting.
    pub fn trainable_param_count(&self) -> u64 {
        let mut total = 0u64;
        self.for_each_entry(|_, e| {
            if let Entry::Param(t) = e {
                total += t.len() as u64;
            }
        });
        total
    }
}

enum Entry<'a> {
    Param(&'a Tensor),
    Buffer(&'a Vec<f64>),
}

/// One named tensor of model state (parameter or running buffer), row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StateEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Arithmetic mean of per-model class probabilities in eval mode. All models
/// must agree on the class count; the prediction is the argmax of the mean.
pub fn ensemble_predict(models: &mut [Network], input: &Tensor) -> Result<Tensor> {
    let first_classes = match models.first() {
        Some(m) => m.spec.n_classes,
        None => return Err(invalid("ensemble of zero models")),
    };
    if models.iter().any(|m| m.spec.n_classes != first_classes) {
        return Err(invalid("ensemble members disagree on the class count"));
    }
    let mut mean: Option<Tensor> = None;
    for model in models.iter_mut() {
        let p = model.predict_proba(input)?;
        mean = Some(match mean {
            None => p,
            Some(mut acc) => {
                for (a, v) in acc.data_mut().iter_mut().zip(p.data()) {
                    *a += v;
                }
                acc
            }
        });
    }
    let mut mean = mean.unwrap();
    let n = models.len() as f64;
    for v in mean.data_mut() {
        *v /= n;
    }
    Ok(mean)
}

/// Mean of already-computed probability rows, the ensemble rule on its own.
pub fn average_probabilities(per_model: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = per_model.first() else {
        return Err(invalid("ensemble of zero models"));
    };
    if per_model.iter().any(|p| p.len() != first.len()) {
        return Err(invalid("probability vectors disagree on the class count"));
    }
    let n = per_model.len() as f64;
    Ok((0..first.len())
        .map(|i| per_model.iter().map(|p| p[i]).sum::<f64>() / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn os_cnn_shapes_and_counts() {
        let spec = ModelSpec::os_cnn(1, 2, 10, None, None).unwrap();
        let mut model = build_model(&spec, &mut rng(0)).unwrap();
        let input = Tensor::zeros(vec![2, 1, 10]);
        let logits = model.eval_logits(&input).unwrap();
        assert_eq!(logits.shape(), &[2, 2]);
        // Enumerated weights equal the analytic block count plus the head.
        assert_eq!(
            model.weight_count(),
            spec.block_conv_weights() + (spec.n_classes * spec.head_in_channels()) as u64
        );
        assert!(spec.block_conv_weights() <= spec.weight_budget);
    }

    #[test]
    fn os_cnn_multivariate_first_layer_channels() {
        let spec = ModelSpec::os_cnn(3, 2, 12, None, None).unwrap();
        let model = build_model(&spec, &mut rng(1)).unwrap();
        assert_eq!(model.blocks[0].layers[0].weights[0].shape()[1], 3);
    }

    #[test]
    fn zero_input_gives_uniform_softmax() {
        for classes in [2usize, 3, 5] {
            let spec = ModelSpec::os_cnn(1, classes, 16, None, None).unwrap();
            let mut model = build_model(&spec, &mut rng(2)).unwrap();
            let p = model.predict_proba(&Tensor::zeros(vec![3, 1, 16])).unwrap();
            for &v in p.data() {
                assert!((v - 1.0 / classes as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_single_class() {
        assert!(ModelSpec::os_cnn(1, 1, 10, None, None).is_err());
    }

    #[test]
    fn coverage_complete_spec_reaches_half_length() {
        for n in [10usize, 100, 512] {
            let spec = ModelSpec::os_cnn(1, 2, n, None, None).unwrap();
            assert!(spec.max_receptive_field() >= n.div_ceil(2), "n={n}");
        }
    }

    #[test]
    fn residual_depths() {
        let spec = ModelSpec::os_cnn_res(1, 1, 2, 10, None, None).unwrap();
        assert!(matches!(spec.kind, ModelKind::OsCnn));
        let model = build_model(&spec, &mut rng(3)).unwrap();
        assert!(matches!(model.blocks[0].skip, Skip::None));

        let spec3 = ModelSpec::os_cnn_res(3, 1, 2, 100, None, None).unwrap();
        let mut model3 = build_model(&spec3, &mut rng(4)).unwrap();
        let out = model3.eval_logits(&Tensor::zeros(vec![1, 1, 100])).unwrap();
        assert_eq!(out.shape(), &[1, 2]);

        assert!(ModelSpec::os_cnn_res(4, 1, 2, 10, None, None).is_err());
        assert!(ModelSpec::os_cnn_res(0, 1, 2, 10, None, None).is_err());
    }

    #[test]
    fn zeroed_second_block_passes_projected_skip() {
        // Budget 300 solves block 1 to 3 channels (6 out) and block 2 to 2
        // channels (4 out), so the skip needs a projection.
        let spec = ModelSpec::os_cnn_res(2, 1, 2, 10, None, Some(300)).unwrap();
        let mut model = build_model(&spec, &mut rng(5)).unwrap();
        // Zero every convolution of block 1 so its batchnorm output is zero
        // and only the skip path survives the final add.
        for layer in &mut model.blocks[1].layers {
            for w in &mut layer.weights {
                w.data_mut().fill(0.0);
            }
        }
        let proj = match &model.blocks[1].skip {
            Skip::Projection(w) => w.clone(),
            other => panic!("expected projection skip, got {other:?}"),
        };
        let input = Tensor::new(
            vec![1, 1, 10],
            (0..10).map(|i| (i as f64 * 0.7).sin()).collect(),
        )
        .unwrap();

        // Manually: block-1 output, then relu(proj(block1_out)), pooled
        // through the same head.
        let mut tape = Tape::new();
        let mut reg = Registrar {
            tape: &mut tape,
            trainable: false,
            vars: Vec::new(),
        };
        let x = reg.tape.input(input.clone());
        let b1 = Network::forward_block(&mut model.blocks[0], &mut reg, x, Phase::Eval).unwrap();
        let pv = reg.tape.input(proj);
        let skip = reg.tape.conv1d(b1, pv).unwrap();
        let act = reg.tape.relu(skip).unwrap();
        let pooled = reg.tape.global_average_pool(act).unwrap();
        let w = reg.tape.input(model.fc_weight.clone());
        let b = reg.tape.input(model.fc_bias.clone());
        let expect = reg.tape.linear(pooled, w, b).unwrap();
        let expected = tape.value(expect).clone();

        let got = model.eval_logits(&input).unwrap();
        for (g, e) in got.data().iter().zip(expected.data()) {
            assert!((g - e).abs() < 1e-12, "got {g}, expected {e}");
        }
    }

    #[test]
    fn mos_cnn_structure() {
        let spec = ModelSpec::mos_cnn(2, 3, 10, None, Some(500)).unwrap();
        let (vb, trunk) = match &spec.arch {
            Architecture::PerVariate {
                variate_block,
                trunk,
            } => (variate_block, trunk),
            other => panic!("unexpected arch {other:?}"),
        };
        assert_eq!(vb.in_channels, 1);
        assert_eq!(trunk[0].in_channels, 2 * vb.out_channels());
        let mut model = build_model(&spec, &mut rng(6)).unwrap();
        let out = model.eval_logits(&Tensor::zeros(vec![4, 2, 10])).unwrap();
        assert_eq!(out.shape(), &[4, 3]);
        assert!(ModelSpec::mos_cnn(1, 2, 10, None, None).is_err());
    }

    #[test]
    fn mos_cnn_zeroed_variate_ignores_its_input() {
        let spec = ModelSpec::mos_cnn(2, 2, 10, None, Some(500)).unwrap();
        let mut model = build_model(&spec, &mut rng(7)).unwrap();
        for layer in &mut model.variate_blocks[1].layers {
            for w in &mut layer.weights {
                w.data_mut().fill(0.0);
            }
        }
        let mut a = vec![0.0; 2 * 10];
        for (i, v) in a.iter_mut().enumerate() {
            *v = (i as f64 * 0.3).cos();
        }
        let mut b = a.clone();
        for v in &mut b[10..] {
            *v += 5.0; // only variate 2 differs
        }
        let la = model
            .eval_logits(&Tensor::new(vec![1, 2, 10], a).unwrap())
            .unwrap();
        let lb = model
            .eval_logits(&Tensor::new(vec![1, 2, 10], b).unwrap())
            .unwrap();
        assert_eq!(la.data(), lb.data());
    }

    #[test]
    fn fcn_reference_counts() {
        let spec = ModelSpec::fcn(1, 2, 50).unwrap();
        assert_eq!(spec.block_conv_weights(), 263_168);
        assert_eq!(fcn_conv_weight_count(1), FCN_REFERENCE_WEIGHTS);
        let model = build_model(&spec, &mut rng(8)).unwrap();
        assert_eq!(model.conv_weight_count(), 263_168);
        assert_eq!(spec.max_receptive_field(), 14);
    }

    #[test]
    fn fcn_fixed_channels_doubles_with_scale() {
        let spec = ModelSpec::fcn_scaled(1, 2, 50, 2.0, ScaleMode::FixedChannels).unwrap();
        let count = spec.block_conv_weights() as f64;
        let reference = FCN_REFERENCE_WEIGHTS as f64;
        assert!((count / reference - 2.0).abs() < 0.02, "ratio {}", count / reference);
    }

    #[test]
    fn fcn_fixed_size_holds_budget() {
        for scale in [0.5, 2.0, 4.0, 10.0] {
            let spec = ModelSpec::fcn_scaled(1, 2, 50, scale, ScaleMode::FixedSize).unwrap();
            let count = spec.block_conv_weights() as f64;
            let reference = FCN_REFERENCE_WEIGHTS as f64;
            assert!(
                (count - reference).abs() / reference <= FIXED_SIZE_TOLERANCE,
                "scale {scale}: {count} vs {reference}"
            );
        }
        assert!(ModelSpec::fcn_scaled(1, 2, 50, 0.05, ScaleMode::FixedChannels).is_err());
    }

    #[test]
    fn ensemble_of_one_is_identity_and_mean_is_simplex() {
        let spec = ModelSpec::os_cnn(1, 3, 12, None, Some(200)).unwrap();
        let mut a = build_model(&spec, &mut rng(9)).unwrap();
        let input = Tensor::new(
            vec![2, 1, 12],
            (0..24).map(|i| (i as f64 * 0.21).sin()).collect(),
        )
        .unwrap();
        let own = a.predict_proba(&input).unwrap();
        let single = ensemble_predict(core::slice::from_mut(&mut a), &input).unwrap();
        assert_eq!(own.data(), single.data());

        let mut models = vec![
            build_model(&spec, &mut rng(10)).unwrap(),
            build_model(&spec, &mut rng(11)).unwrap(),
            build_model(&spec, &mut rng(12)).unwrap(),
        ];
        let mean = ensemble_predict(&mut models, &input).unwrap();
        for row in 0..2 {
            let s: f64 = mean.data()[row * 3..(row + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(mean.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn built_weight_counts_match_the_analytic_accounting() {
        let specs = vec![
            ModelSpec::os_cnn(1, 2, 40, None, None).unwrap(),
            ModelSpec::os_cnn(3, 4, 24, None, None).unwrap(),
            ModelSpec::os_cnn_res(2, 1, 2, 10, None, Some(300)).unwrap(),
            ModelSpec::os_cnn_res(3, 1, 3, 20, None, Some(2_000)).unwrap(),
            ModelSpec::mos_cnn(2, 2, 10, None, Some(500)).unwrap(),
            ModelSpec::fcn(1, 2, 50).unwrap(),
            ModelSpec::fcn_scaled(2, 3, 50, 1.5, ScaleMode::FixedSize).unwrap(),
        ];
        for (i, spec) in specs.iter().enumerate() {
            let model = build_model(spec, &mut rng(i as u64)).unwrap();
            let expected = spec.block_conv_weights()
                + spec.skip_projection_weights()
                + (spec.n_classes * spec.head_in_channels()) as u64;
            assert_eq!(model.weight_count(), expected, "spec {i}: {:?}", spec.kind);
        }
    }

    #[test]
    fn probability_averaging_examples() {
        let avg = average_probabilities(&[vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        assert!((avg[0] - 0.4).abs() < 1e-15 && (avg[1] - 0.6).abs() < 1e-15);
        let one = average_probabilities(&[vec![0.3, 0.7]]).unwrap();
        assert_eq!(one, vec![0.3, 0.7]);
        assert!(average_probabilities(&[vec![0.5, 0.5], vec![1.0]]).is_err());
        assert!(average_probabilities(&[]).is_err());
    }

    #[test]
    fn state_roundtrip_is_exact() {
        let spec = ModelSpec::os_cnn_res(2, 1, 2, 10, None, Some(400)).unwrap();
        let mut a = build_model(&spec, &mut rng(13)).unwrap();
        let mut b = build_model(&spec, &mut rng(14)).unwrap();
        let input = Tensor::new(
            vec![1, 1, 10],
            (0..10).map(|i| (i as f64).sin()).collect(),
        )
        .unwrap();
        assert_ne!(
            a.eval_logits(&input).unwrap().data(),
            b.eval_logits(&input).unwrap().data()
        );
        let state = a.export_state();
        b.import_state(&state).unwrap();
        assert_eq!(
            a.eval_logits(&input).unwrap().data(),
            b.eval_logits(&input).unwrap().data()
        );
        let names = a.param_order();
        assert!(names.iter().any(|n| n == "fc.weight"));
        assert_eq!(
            names.len(),
            a.params_mut().len(),
            "parameter order must match the mutable view"
        );
    }

    #[test]
    fn deterministic_build_from_seed() {
        let spec = ModelSpec::os_cnn(1, 2, 10, None, None).unwrap();
        let a = build_model(&spec, &mut rng(42)).unwrap();
        let b = build_model(&spec, &mut rng(42)).unwrap();
        assert_eq!(a.export_state(), b.export_state());
    }
}
