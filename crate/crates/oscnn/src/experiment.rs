//! Protocol runner: multi-seed training with wall-clock accounting,
//! JSON-lines persistence, and the receptive-field sweep.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use oscnn_core::dataset::DatasetPair;
use oscnn_core::models::{ModelKind, ModelSpec, ScaleMode, ARCH_NOTES};
use oscnn_core::train::{train_spec, TrainConfig, TrainError, TrainOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("seed {seed}: {source}")]
    Aborted {
        seed: u64,
        source: TrainError,
        /// Whatever completed before the failing seed.
        partial: Box<RunResult>,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Io(String),
}

/// Everything needed to reproduce a run: the resolved model genotype, the
/// full training configuration, and the architecture conventions that are
/// not visible in either.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub conventions: BTreeMap<String, String>,
}

impl Fingerprint {
    pub fn new(model: &ModelSpec, train: &TrainConfig) -> Self {
        Self {
            model: model.clone(),
            train: train.clone(),
            conventions: ARCH_NOTES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

/// One trained configuration: per-seed accuracies and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema: u32,
    pub dataset: String,
    pub model: String,
    pub fingerprint: Fingerprint,
    pub outcomes: Vec<TrainOutcome>,
    pub seed_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub wall_time_s: f64,
    /// Set when a seed aborted; the lists above then hold the completed
    /// seeds only.
    pub aborted: Option<String>,
}

pub fn model_kind_name(kind: &ModelKind) -> String {
    match kind {
        ModelKind::OsCnn => "os-cnn".into(),
        ModelKind::OsCnnRes { depth } => format!("os-cnn-res:{depth}"),
        ModelKind::MosCnn => "mos-cnn".into(),
        ModelKind::Fcn => "fcn".into(),
        ModelKind::FcnScaled { rf_scale, mode } => format!(
            "fcn-scaled:{rf_scale}:{}",
            match mode {
                ScaleMode::FixedChannels => "fixed-channels",
                ScaleMode::FixedSize => "fixed-size",
            }
        ),
    }
}

fn collect(
    dataset: &str,
    spec: &ModelSpec,
    config: &TrainConfig,
    outcomes: Vec<TrainOutcome>,
    wall_time_s: f64,
    aborted: Option<String>,
) -> RunResult {
    let seed_accuracies: Vec<f64> = outcomes.iter().map(|o| o.test_accuracy).collect();
    let mean_accuracy = if seed_accuracies.is_empty() {
        0.0
    } else {
        seed_accuracies.iter().sum::<f64>() / seed_accuracies.len() as f64
    };
    RunResult {
        schema: RESULT_SCHEMA_VERSION,
        dataset: dataset.to_string(),
        model: model_kind_name(&spec.kind),
        fingerprint: Fingerprint::new(spec, config),
        outcomes,
        seed_accuracies,
        mean_accuracy,
        wall_time_s,
        aborted: aborted.clone(),
    }
}

/// Trains the spec once per seed (in parallel when `jobs > 1`; seed results
/// are deterministic either way) and aggregates the accuracies. A failing
/// seed aborts the protocol but hands back the completed part.
pub fn run_protocol(
    spec: &ModelSpec,
    data: &DatasetPair,
    config: &TrainConfig,
    jobs: usize,
) -> Result<RunResult, ProtocolError> {
    config.validate()?;
    let started = Instant::now();
    let jobs = jobs.max(1).min(config.seeds.len());
    let results: Vec<(u64, Result<TrainOutcome, TrainError>)> = if jobs == 1 {
        config
            .seeds
            .iter()
            .map(|&seed| (seed, train_spec(spec, data, config, seed).map(|(_, o)| o)))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = config
                .seeds
                .chunks(config.seeds.len().div_ceil(jobs))
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .iter()
                            .map(|&seed| {
                                (seed, train_spec(spec, data, config, seed).map(|(_, o)| o))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("seed worker panicked"))
                .collect()
        })
    };

    let mut outcomes = Vec::new();
    let mut failure: Option<(u64, TrainError)> = None;
    for (seed, result) in results {
        match result {
            Ok(o) => outcomes.push(o),
            Err(e) if failure.is_none() => failure = Some((seed, e)),
            Err(_) => {}
        }
    }
    let wall = started.elapsed().as_secs_f64();
    match failure {
        None => Ok(collect(data.name(), spec, config, outcomes, wall, None)),
        Some((seed, source)) => {
            let note = format!("seed {seed}: {source}");
            let partial = collect(data.name(), spec, config, outcomes, wall, Some(note));
            Err(ProtocolError::Aborted {
                seed,
                source,
                partial: Box::new(partial),
            })
        }
    }
}

/// Appends one result as a JSON line.
pub fn append_result_jsonl(path: impl AsRef<Path>, result: &RunResult) -> Result<(), ProtocolError> {
    let line = serde_json::to_string(result).map_err(|e| ProtocolError::Io(e.to_string()))?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path.as_ref())
        .map_err(|e| ProtocolError::Io(format!("{}: {e}", path.as_ref().display())))?;
    writeln!(file, "{line}").map_err(|e| ProtocolError::Io(e.to_string()))?;
    Ok(())
}

pub fn read_results_jsonl(path: impl AsRef<Path>) -> Result<Vec<RunResult>, ProtocolError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| ProtocolError::Io(format!("{}: {e}", path.as_ref().display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ProtocolError::Io(e.to_string())))
        .collect()
}

/// One sweep entry: the trained configuration and where it ranked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub model: String,
    /// Receptive field the scaled baseline was built for; the omni-scale
    /// entry reports its own maximum path receptive field.
    pub receptive_field: usize,
    pub conv_weights: u64,
    pub mean_accuracy: f64,
    pub rank: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub dataset: String,
    pub mode: String,
    pub entries: Vec<SweepEntry>,
    pub results: Vec<RunResult>,
}

/// Trains one scaled baseline per requested receptive field plus a single
/// omni-scale model (independent of the sweep values), then ranks the mean
/// accuracies.
pub fn rf_sweep(
    data: &DatasetPair,
    rf_values: &[usize],
    mode: ScaleMode,
    config: &TrainConfig,
    jobs: usize,
) -> Result<SweepReport, ProtocolError> {
    let n_variates = data.train.n_variates();
    let n_classes = data.train.n_classes();
    let series_len = data
        .train
        .series_len()
        .unwrap_or_else(|| data.train.samples.iter().map(|s| s.shape()[1]).max().unwrap());

    let mut specs: Vec<(usize, ModelSpec)> = Vec::new();
    for &rf in rf_values {
        let scale = oscnn_core::models::fcn_scale_for_rf(rf);
        let spec = ModelSpec::fcn_scaled(n_variates, n_classes, series_len, scale, mode)
            .map_err(|e| ProtocolError::Train(TrainError::Model(e)))?;
        specs.push((rf, spec));
    }
    let os_spec = ModelSpec::os_cnn(n_variates, n_classes, series_len, None, None)
        .map_err(|e| ProtocolError::Train(TrainError::Model(e)))?;
    specs.push((os_spec.max_receptive_field(), os_spec));

    let mut results = Vec::new();
    let mut entries = Vec::new();
    for (rf, spec) in &specs {
        let result = run_protocol(spec, data, config, jobs)?;
        entries.push(SweepEntry {
            model: result.model.clone(),
            receptive_field: *rf,
            conv_weights: spec.block_conv_weights(),
            mean_accuracy: result.mean_accuracy,
            rank: 0.0,
        });
        results.push(result);
    }
    // Rank by mean accuracy, ties sharing the mean rank.
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&i, &j| {
        entries[j]
            .mean_accuracy
            .partial_cmp(&entries[i].mean_accuracy)
            .unwrap()
    });
    let mut pos = 0;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len()
            && entries[order[end]].mean_accuracy == entries[order[pos]].mean_accuracy
        {
            end += 1;
        }
        let mean_rank = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            entries[idx].rank = mean_rank;
        }
        pos = end;
    }
    Ok(SweepReport {
        dataset: data.name().to_string(),
        mode: match mode {
            ScaleMode::FixedChannels => "fixed-channels".into(),
            ScaleMode::FixedSize => "fixed-size".into(),
        },
        entries,
        results,
    })
}
