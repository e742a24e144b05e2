//! Command-line front end.
//!
//! Five subcommands: `analyze` (kernel planning for a series length),
//! `train` (the multi-seed protocol on one dataset), `sweep` (scaled
//! baselines over receptive fields plus the omni-scale reference),
//! `evaluate` (wins/ranks/significance over an accuracy matrix), and
//! `report` (relative accuracies and gain quadrants). Machine-readable JSON
//! goes to stdout; `--pretty` adds aligned text. Exit codes: 0 success,
//! 1 module error, 2 usage error.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use oscnn_core::dataset::DatasetPair;
use oscnn_core::kernel_config::{
    allocate_channels, canonical_kernel_lists, compare_sequences, count_block_weights,
    covers_through, prime_bound_for_target, select_prime_bound, OsBlockSpec,
};
use oscnn_core::models::{fcn_conv_weight_count, ModelSpec, ScaleMode};
use oscnn_core::synth::sine_square_fixture;
use oscnn_core::train::TrainConfig;
use serde_json::json;

use crate::checkpoint::save_checkpoint;
use crate::data_io::{interpolate_missing, load_dataset};
use crate::experiment::{
    append_result_jsonl, rf_sweep, run_protocol, ProtocolError, RunResult,
};
use crate::report::{
    evaluate_matrix, quadrant_report, read_accuracy_matrix_csv, relative_report,
    render_wins_table, write_relative_csv,
};

#[derive(Parser)]
#[command(
    name = "oscnn",
    version,
    about = "Omni-scale 1D-CNN toolkit for time series classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the kernel configuration for a series length.
    Analyze(AnalyzeArgs),
    /// Train one model on one dataset across seeds.
    Train(TrainArgs),
    /// Receptive-field sweep of scaled baselines against the omni-scale model.
    Sweep(SweepArgs),
    /// Wins, ranks and Wilcoxon-Holm cliques over an accuracy matrix.
    Evaluate(EvaluateArgs),
    /// Relative-accuracy deltas and expected-vs-actual gain quadrants.
    Report(ReportArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input series length.
    #[arg(long)]
    length: u64,
    /// Input channel count (variates).
    #[arg(long, default_value_t = 1)]
    variates: usize,
    /// Weight budget for the channel solve; defaults to the baseline size
    /// for the given variate count.
    #[arg(long)]
    budget: Option<u64>,
    /// Target the kernel plan at this receptive field instead of half the
    /// length.
    #[arg(long)]
    rf: Option<usize>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args, Clone)]
struct ProtocolArgs {
    /// Number of seeds (0..N).
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Z-normalize each series before training.
    #[arg(long)]
    znorm: bool,
    /// Fixed batch size instead of the n/10 rule.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Stop a run early once the epoch-mean train loss drops below this.
    #[arg(long)]
    stop_loss: Option<f64>,
    /// Parallel seed workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Linearly interpolate missing values instead of rejecting them.
    #[arg(long)]
    interpolate: bool,
    /// Dataset root; falls back to $OSCNN_DATA_ROOT, then ./data.
    #[arg(long)]
    data_root: Option<PathBuf>,
}

impl ProtocolArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            znormalize: self.znorm,
            batch_size_override: self.batch_size,
            stop_at_train_loss: self.stop_loss,
            seeds: (0..self.seeds).collect(),
            ..TrainConfig::default()
        }
    }

    fn data_root(&self) -> PathBuf {
        self.data_root.clone().unwrap_or_else(|| {
            std::env::var_os("OSCNN_DATA_ROOT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data"))
        })
    }

    fn load(&self, dataset: &str) -> Result<DatasetPair> {
        let pair = if dataset == "synthetic" {
            sine_square_fixture(20, 20, 64, 0)
        } else {
            load_dataset(self.data_root(), dataset)?
        };
        if self.interpolate {
            Ok(DatasetPair::new(
                interpolate_missing(&pair.train)?,
                interpolate_missing(&pair.test)?,
            )?)
        } else {
            Ok(pair)
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset name under the data root, or "synthetic" for the built-in
    /// separable fixture.
    #[arg(long)]
    dataset: String,
    /// os-cnn | os-cnn-res:K | mos-cnn | fcn
    #[arg(long, default_value = "os-cnn")]
    model: String,
    /// Weight budget per omni-scale block; defaults to the baseline size.
    #[arg(long)]
    budget: Option<u64>,
    /// Plan kernels for this receptive field instead of half the length.
    #[arg(long)]
    rf: Option<usize>,
    /// Results file (JSON lines, appended).
    #[arg(long, default_value = "results.jsonl")]
    out: PathBuf,
    /// Save the first seed's trained model as a JSON checkpoint.
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: String,
    /// Comma-separated receptive fields for the scaled baselines.
    #[arg(long, value_delimiter = ',')]
    rf: Vec<usize>,
    /// fixed-channels | fixed-size
    #[arg(long, default_value = "fixed-size")]
    mode: String,
    #[arg(long, default_value = "sweep.jsonl")]
    out: PathBuf,
    #[arg(long)]
    pretty: bool,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Accuracy matrix CSV: header `dataset,<classifier>…`, one row per
    /// dataset.
    #[arg(long)]
    matrix: PathBuf,
    /// Classifier whose wins are tallied against every other column.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    candidate: String,
    /// Comma-separated baseline classifiers.
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<String>,
    /// Train-estimated accuracy matrix for expected-gain quadrants.
    #[arg(long)]
    expected: Option<PathBuf>,
    /// Directory for the per-baseline delta CSV files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

/// Parses argv and dispatches; returns the process exit code.
pub fn run<I, S>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Analyze(args) => cmd_analyze(args, stdout),
        Command::Train(args) => cmd_train(args, stdout),
        Command::Sweep(args) => cmd_sweep(args, stdout),
        Command::Evaluate(args) => cmd_evaluate(args, stdout),
        Command::Report(args) => cmd_report(args, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn cmd_analyze(args: AnalyzeArgs, stdout: &mut dyn Write) -> Result<()> {
    let target_rf = match args.rf {
        Some(rf) => rf,
        None => usize::try_from(args.length.div_ceil(2)).map_err(|_| anyhow!("length too large"))?,
    };
    let bound = match args.rf {
        Some(rf) => prime_bound_for_target(rf).map_err(|e| anyhow!("{e}"))?,
        None => select_prime_bound(args.length).map_err(|e| anyhow!("{e}"))?,
    };
    let lists = canonical_kernel_lists(bound).map_err(|e| anyhow!("{e}"))?;
    let coverage_ok = covers_through(&lists, target_rf).map_err(|e| anyhow!("{e}"))?;
    let budget = args.budget.unwrap_or_else(|| fcn_conv_weight_count(args.variates));
    let channels = allocate_channels(budget, &lists, args.variates).map_err(|e| anyhow!("{e}"))?;
    let spec = OsBlockSpec::new(lists.clone(), channels, args.variates).map_err(|e| anyhow!("{e}"))?;
    let cost = count_block_weights(&spec);
    let comparison = compare_sequences(target_rf.max(2) as u64).map_err(|e| anyhow!("{e}"))?;
    let record = json!({
        "n": args.length,
        "m": bound,
        "kernel_lists": lists,
        "coverage_ok": coverage_ok,
        "target_rf": target_rf,
        "branch_channels": channels,
        "weight_budget": budget,
        "total_weights": cost.total_weights,
        "per_layer_weights": cost.per_layer_weights,
        "max_rf": cost.max_rf,
        "comparison": {
            "prime_sum": comparison.prime_sum,
            "arithmetic_sum": comparison.arithmetic_sum,
            "geometric_layers_needed": comparison.geometric_layers_needed,
        },
    });
    writeln!(stdout, "{}", serde_json::to_string_pretty(&record)?)?;
    if args.pretty {
        writeln!(
            stdout,
            "length {} -> prime bound {bound}, {} branches x {channels} channels, {} weights (budget {budget})",
            args.length,
            lists[0].len(),
            cost.total_weights
        )?;
    }
    Ok(())
}

fn build_spec(
    model: &str,
    n_variates: usize,
    n_classes: usize,
    series_len: usize,
    rf_override: Option<usize>,
    budget: Option<u64>,
) -> Result<ModelSpec> {
    let spec = if model == "os-cnn" {
        ModelSpec::os_cnn(n_variates, n_classes, series_len, rf_override, budget)
    } else if let Some(depth) = model.strip_prefix("os-cnn-res:") {
        let depth: usize = depth.parse().context("residual depth must be an integer")?;
        ModelSpec::os_cnn_res(depth, n_variates, n_classes, series_len, rf_override, budget)
    } else if model == "mos-cnn" {
        ModelSpec::mos_cnn(n_variates, n_classes, series_len, rf_override, budget)
    } else if model == "fcn" {
        ModelSpec::fcn(n_variates, n_classes, series_len)
    } else {
        bail!("unknown model {model:?}; expected os-cnn, os-cnn-res:K, mos-cnn or fcn");
    };
    spec.map_err(|e| anyhow!("{e}"))
}

fn persist_and_print(
    result: &RunResult,
    out: &PathBuf,
    pretty: bool,
    stdout: &mut dyn Write,
) -> Result<()> {
    append_result_jsonl(out, result).map_err(|e| anyhow!("{e}"))?;
    writeln!(stdout, "{}", serde_json::to_string(result)?)?;
    if pretty {
        writeln!(
            stdout,
            "{} on {}: mean accuracy {:.4} over {} seeds ({:.1}s)",
            result.model,
            result.dataset,
            result.mean_accuracy,
            result.seed_accuracies.len(),
            result.wall_time_s
        )?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = args.protocol.load(&args.dataset)?;
    let config = args.protocol.config();
    let series_len = data
        .train
        .samples
        .iter()
        .chain(&data.test.samples)
        .map(|s| s.shape()[1])
        .max()
        .unwrap();
    let spec = build_spec(
        &args.model,
        data.train.n_variates(),
        data.train.n_classes(),
        series_len,
        args.rf,
        args.budget,
    )?;
    if let Some(path) = &args.save_model {
        let first_seed = config.seeds[0];
        let (model, _) =
            oscnn_core::train::train_spec(&spec, &data, &config, first_seed)
                .map_err(|e| anyhow!("{e}"))?;
        save_checkpoint(&model, path)?;
    }
    match run_protocol(&spec, &data, &config, args.protocol.jobs) {
        Ok(result) => persist_and_print(&result, &args.out, args.pretty, stdout),
        Err(ProtocolError::Aborted {
            seed,
            source,
            partial,
        }) => {
            persist_and_print(&partial, &args.out, args.pretty, stdout)?;
            Err(anyhow!("seed {seed} aborted: {source} (partial results persisted)"))
        }
        Err(e) => Err(anyhow!("{e}")),
    }
}

fn cmd_sweep(args: SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.rf.is_empty() {
        bail!("--rf needs at least one receptive field");
    }
    let mode = match args.mode.as_str() {
        "fixed-channels" => ScaleMode::FixedChannels,
        "fixed-size" => ScaleMode::FixedSize,
        other => bail!("unknown mode {other:?}; expected fixed-channels or fixed-size"),
    };
    let data = args.protocol.load(&args.dataset)?;
    let config = args.protocol.config();
    let report = rf_sweep(&data, &args.rf, mode, &config, args.protocol.jobs)
        .map_err(|e| anyhow!("{e}"))?;
    for result in &report.results {
        append_result_jsonl(&args.out, result).map_err(|e| anyhow!("{e}"))?;
    }
    let summary = json!({
        "dataset": report.dataset,
        "mode": report.mode,
        "entries": report.entries,
    });
    writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?)?;
    if args.pretty {
        for e in &report.entries {
            writeln!(
                stdout,
                "rank {:>4}  {:<24} rf {:>4}  weights {:>8}  accuracy {:.4}",
                e.rank, e.model, e.receptive_field, e.conv_weights, e.mean_accuracy
            )?;
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, stdout: &mut dyn Write) -> Result<()> {
    let matrix = read_accuracy_matrix_csv(&args.matrix)?;
    let report = evaluate_matrix(&matrix, &args.target, args.alpha)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, &text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => writeln!(stdout, "{text}")?,
    }
    if args.pretty {
        writeln!(stdout, "{}", render_wins_table(&report))?;
        writeln!(stdout, "average ranks:")?;
        for (name, rank) in &report.average_ranks {
            writeln!(stdout, "  {rank:>6.3}  {name}")?;
        }
        writeln!(stdout, "cliques (not significantly different):")?;
        for clique in &report.critical_difference.cliques {
            let names: Vec<&str> = clique
                .iter()
                .map(|&i| report.critical_difference.classifiers[i].as_str())
                .collect();
            writeln!(stdout, "  {{{}}}", names.join(", "))?;
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.baselines.is_empty() {
        bail!("--baselines needs at least one classifier");
    }
    let matrix = read_accuracy_matrix_csv(&args.matrix)?;
    let expected = args
        .expected
        .as_ref()
        .map(read_accuracy_matrix_csv)
        .transpose()?;
    let mut reports = Vec::new();
    let mut quadrants = Vec::new();
    for baseline in &args.baselines {
        let rel = relative_report(&matrix, &args.candidate, baseline)?;
        if let Some(dir) = &args.out_dir {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!(
                "relative_{}_vs_{}.csv",
                args.candidate.replace(['/', ' '], "_"),
                baseline.replace(['/', ' '], "_")
            ));
            write_relative_csv(&rel, &path)?;
        }
        if let Some(exp) = &expected {
            quadrants.push(quadrant_report(exp, &matrix, &args.candidate, baseline)?);
        }
        reports.push(rel);
    }
    let summary = json!({
        "candidate": args.candidate,
        "relative": reports,
        "quadrants": quadrants,
    });
    writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?)?;
    if args.pretty {
        for rel in serde_json::from_value::<Vec<crate::report::RelativeReport>>(
            summary["relative"].clone(),
        )? {
            let wins = rel.deltas.iter().filter(|(_, d)| *d > 0.0).count();
            let losses = rel.deltas.iter().filter(|(_, d)| *d < 0.0).count();
            writeln!(
                stdout,
                "{} vs {}: {wins} up, {losses} down, {} even",
                rel.candidate,
                rel.baseline,
                rel.deltas.len() - wins - losses
            )?;
        }
    }
    Ok(())
}
