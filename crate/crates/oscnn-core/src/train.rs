//! The unified training protocol.
//!
//! One configuration drives every dataset: Adam on softmax cross-entropy, a
//! plateau learning-rate schedule watching the train loss, and the batch-size
//! rule `clamp(round(n/10), 2, 16)`. The test split enters exactly once, for
//! the final accuracy; the fitting loop only ever sees the train split.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, DatasetPair, TimeSeriesDataset};
use crate::models::{build_model, ModelError, ModelSpec, Network};
use crate::optim::{adam_step, AdamState};
use crate::tensor::{argmax_rows, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("run diverged: loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("dataset contains missing values; interpolate or drop them before training")]
    MissingValues,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

type Result<T> = core::result::Result<T, TrainError>;

/// Reduce-on-plateau schedule over the epoch-mean train loss.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LrSchedule {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 50,
            min_lr: 1e-4,
        }
    }
}

/// Batch size as a fraction of the train split, clamped to `[floor, cap]`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BatchRule {
    pub divisor: usize,
    pub floor: usize,
    pub cap: usize,
}

impl Default for BatchRule {
    fn default() -> Self {
        Self {
            divisor: 10,
            floor: 2,
            cap: 16,
        }
    }
}

impl BatchRule {
    /// `clamp(round-half-up(n / divisor), floor, cap)`.
    pub fn batch_size(&self, n_train: usize) -> usize {
        let rounded = (n_train + self.divisor / 2) / self.divisor;
        rounded.clamp(self.floor, self.cap)
    }
}

/// Batch size under the default rule (divide by 10, clamp to `[2, 16]`).
pub fn batch_size(n_train: usize) -> usize {
    BatchRule::default().batch_size(n_train)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub batch_rule: BatchRule,
    /// Fixed batch size instead of the rule (the batch-size ablations).
    pub batch_size_override: Option<usize>,
    /// Z-normalize both splits before training; off by default since the
    /// models take raw data.
    pub znormalize: bool,
    /// Stop early once the epoch-mean train loss falls below this.
    pub stop_at_train_loss: Option<f64>,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-3,
            schedule: LrSchedule::default(),
            batch_rule: BatchRule::default(),
            batch_size_override: None,
            znormalize: false,
            stop_at_train_loss: None,
            seeds: (0..10).collect(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(TrainError::InvalidArgument("seed list is empty".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if self.batch_size_override == Some(0) {
            return Err(TrainError::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// What one seeded run produced.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainOutcome {
    pub seed: u64,
    pub test_accuracy: f64,
    pub final_train_loss: f64,
    pub epochs_run: usize,
    pub final_lr: f64,
}

/// Fits the model on the train split only.
fn fit(
    model: &mut Network,
    train: &TimeSeriesDataset,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize, f64)> {
    let n = train.len();
    let batch = config
        .batch_size_override
        .unwrap_or_else(|| config.batch_rule.batch_size(n))
        .min(n);
    let mut lr = config.learning_rate;
    let mut adam: Vec<AdamState> = model
        .params_mut()
        .iter()
        .map(|p| AdamState::new(p.len()))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best_loss = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut epoch_loss = f64::NAN;
    let mut epochs_run = 0;

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let (input, labels) = train.assemble_batch(chunk)?;
            let mut tape = crate::autograd::Tape::new();
            let (loss, pass) = model.loss_forward(&mut tape, &input, &labels)?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            loss_sum += loss_value;
            batches += 1;
            let grads = tape.backward(loss)?;
            let mut params = model.params_mut();
            for ((param, var), state) in
                params.iter_mut().zip(&pass.param_vars).zip(adam.iter_mut())
            {
                if let Some(g) = grads.get(*var) {
                    adam_step(param.data_mut(), g.data(), state, lr)?;
                }
            }
        }
        epoch_loss = loss_sum / batches as f64;
        epochs_run = epoch + 1;

        if let Some(target) = config.stop_at_train_loss {
            if epoch_loss < target {
                break;
            }
        }
        if epoch_loss < best_loss {
            best_loss = epoch_loss;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs > config.schedule.patience {
                lr = (lr * config.schedule.factor).max(config.schedule.min_lr);
                stale_epochs = 0;
            }
        }
    }
    Ok((epoch_loss, epochs_run, lr))
}

/// Fraction of correctly classified samples, evaluated in eval mode.
pub fn evaluate_accuracy(model: &mut Network, split: &TimeSeriesDataset) -> Result<f64> {
    let n = split.len();
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(64) {
        let (input, labels) = split.assemble_batch(chunk)?;
        let logits = model.eval_logits(&input)?;
        let predicted = argmax_rows(&logits)?;
        correct += predicted
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / n as f64)
}

/// Trains an already-built model on the pair's train split and evaluates the
/// test split once at the end.
pub fn train_model(
    model: &mut Network,
    data: &DatasetPair,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.has_missing() || data.test.has_missing() {
        return Err(TrainError::MissingValues);
    }
    // The shuffle stream is decoupled from the init stream but still fully
    // determined by the run seed.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let (final_train_loss, epochs_run, final_lr) = fit(model, &data.train, config, &mut rng)?;
    let test_accuracy = evaluate_accuracy(model, &data.test)?;
    Ok(TrainOutcome {
        seed,
        test_accuracy,
        final_train_loss,
        epochs_run,
        final_lr,
    })
}

/// Z-normalization (when requested) followed by right zero-padding to the
/// common maximum length across both splits, in that order so padding never
/// skews the series statistics.
pub fn prepare_pair(data: &DatasetPair, znormalize: bool) -> DatasetPair {
    let max_len = data
        .train
        .samples
        .iter()
        .chain(&data.test.samples)
        .map(|s| s.shape()[1])
        .max()
        .unwrap_or(0);
    let step = |split: &TimeSeriesDataset| {
        let z = if znormalize {
            crate::dataset::znormalize_dataset(split)
        } else {
            split.clone()
        };
        crate::dataset::pad_to_length(&z, max_len).expect("max length covers every sample")
    };
    DatasetPair {
        train: step(&data.train),
        test: step(&data.test),
    }
}

/// Builds the model from its spec with seed-determined initial parameters,
/// then trains and evaluates it.
pub fn train_spec(
    spec: &ModelSpec,
    data: &DatasetPair,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Network, TrainOutcome)> {
    config.validate()?;
    let prepared;
    let data = if config.znormalize || !data.train.equal_length || !data.test.equal_length {
        prepared = prepare_pair(data, config.znormalize);
        &prepared
    } else {
        data
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = build_model(spec, &mut init_rng)?;
    let outcome = train_model(&mut model, data, config, seed)?;
    Ok((model, outcome))
}
