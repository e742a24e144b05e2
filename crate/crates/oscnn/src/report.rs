//! Accuracy-matrix ingestion and the comparison reports built from it.
//!
//! The matrix CSV layout: a header of classifier names with `dataset` in the
//! first column, one row per dataset. Reports come back as JSON (machine
//! first) with optional aligned-text rendering for terminals.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use oscnn_core::stats::{
    average_ranks, pairwise_wins, relative_accuracy, round8, texas_quadrant, wilcoxon_holm,
    AccuracyMatrix, CellSource, CriticalDifference, GainQuadrant,
};
use serde::{Deserialize, Serialize};

pub fn read_accuracy_matrix_csv(path: impl AsRef<Path>) -> Result<AccuracyMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .with_context(|| format!("reading {}", path.as_ref().display()))?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        bail!("matrix needs a dataset column and at least one classifier column");
    }
    let classifiers: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let mut datasets = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            bail!("row {} holds {} fields, expected {}", i + 2, record.len(), headers.len());
        }
        datasets.push(record[0].to_string());
        let row: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|cell| {
                cell.parse::<f64>()
                    .with_context(|| format!("row {}: bad accuracy {cell:?}", i + 2))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    AccuracyMatrix::new(classifiers, datasets, rows, CellSource::PublishedTable)
        .map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn write_accuracy_matrix_csv(matrix: &AccuracyMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["dataset".to_string()];
    header.extend(matrix.classifiers.clone());
    writer.write_record(&header)?;
    for (d, dataset) in matrix.datasets.iter().enumerate() {
        let mut row = vec![dataset.clone()];
        for c in 0..matrix.classifiers.len() {
            row.push(format!("{}", matrix.value(d, c)));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// One row of a wins table: the target classifier against one baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WinsRow {
    pub baseline: String,
    pub baseline_wins: usize,
    pub target_wins: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: String,
    pub datasets: usize,
    pub wins: Vec<WinsRow>,
    pub average_ranks: Vec<(String, f64)>,
    pub critical_difference: CriticalDifference,
}

/// Pairwise wins of the target against every other classifier, average
/// ranks, and the Wilcoxon-Holm clique structure.
pub fn evaluate_matrix(
    matrix: &AccuracyMatrix,
    target: &str,
    alpha: f64,
) -> Result<EvalReport> {
    let t = matrix
        .classifier_index(target)
        .with_context(|| format!("classifier {target:?} not in the matrix"))?;
    let target_col = matrix.column(t);
    let mut wins = Vec::new();
    for (c, name) in matrix.classifiers.iter().enumerate() {
        if c == t {
            continue;
        }
        let (target_wins, baseline_wins, ties) =
            pairwise_wins(&target_col, &matrix.column(c)).map_err(|e| anyhow::anyhow!("{e}"))?;
        wins.push(WinsRow {
            baseline: name.clone(),
            baseline_wins,
            target_wins,
            ties,
        });
    }
    let ranks = average_ranks(matrix).map_err(|e| anyhow::anyhow!("{e}"))?;
    let cd = wilcoxon_holm(matrix, alpha).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut named_ranks: Vec<(String, f64)> = matrix
        .classifiers
        .iter()
        .cloned()
        .zip(ranks)
        .collect();
    named_ranks.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    Ok(EvalReport {
        target: target.to_string(),
        datasets: matrix.datasets.len(),
        wins,
        average_ranks: named_ranks,
        critical_difference: cd,
    })
}

/// Aligned-text rendering of the wins table, one baseline per row.
pub fn render_wins_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let width = report
        .wins
        .iter()
        .map(|w| w.baseline.len())
        .chain(["Baseline".len()])
        .max()
        .unwrap_or(8);
    let _ = writeln!(
        out,
        "{:width$}  {:>14}  {:>14}  {:>6}",
        "Baseline", "Baseline wins", format!("{} wins", report.target), "Same"
    );
    for row in &report.wins {
        let _ = writeln!(
            out,
            "{:width$}  {:>14}  {:>14}  {:>6}",
            row.baseline, row.baseline_wins, row.target_wins, row.ties
        );
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelativeReport {
    pub candidate: String,
    pub baseline: String,
    /// `(dataset, candidate − baseline)` sorted ascending by delta.
    pub deltas: Vec<(String, f64)>,
}

pub fn relative_report(
    matrix: &AccuracyMatrix,
    candidate: &str,
    baseline: &str,
) -> Result<RelativeReport> {
    let c = matrix
        .classifier_index(candidate)
        .with_context(|| format!("classifier {candidate:?} not in the matrix"))?;
    let b = matrix
        .classifier_index(baseline)
        .with_context(|| format!("classifier {baseline:?} not in the matrix"))?;
    let deltas = relative_accuracy(&matrix.datasets, &matrix.column(c), &matrix.column(b))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(RelativeReport {
        candidate: candidate.to_string(),
        baseline: baseline.to_string(),
        deltas,
    })
}

pub fn write_relative_csv(report: &RelativeReport, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["dataset", "delta"])?;
    for (dataset, delta) in &report.deltas {
        writer.write_record([dataset.as_str(), &format!("{delta}")])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadrantReport {
    pub candidate: String,
    pub baseline: String,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    pub per_dataset: Vec<(String, String)>,
}

/// Classifies every dataset by expected (train-estimated) versus actual
/// (test) gain of the candidate over the baseline. Gains are accuracy
/// ratios; the expected matrix must align with the actual one.
pub fn quadrant_report(
    expected: &AccuracyMatrix,
    actual: &AccuracyMatrix,
    candidate: &str,
    baseline: &str,
) -> Result<QuadrantReport> {
    if expected.datasets != actual.datasets {
        bail!("expected and actual matrices list different datasets");
    }
    let pick = |m: &AccuracyMatrix, who: &str| -> Result<Vec<f64>> {
        let idx = m
            .classifier_index(who)
            .with_context(|| format!("classifier {who:?} not in the matrix"))?;
        Ok(m.column(idx))
    };
    let exp_c = pick(expected, candidate)?;
    let exp_b = pick(expected, baseline)?;
    let act_c = pick(actual, candidate)?;
    let act_b = pick(actual, baseline)?;
    let mut report = QuadrantReport {
        candidate: candidate.to_string(),
        baseline: baseline.to_string(),
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
        per_dataset: Vec::new(),
    };
    for (d, dataset) in actual.datasets.iter().enumerate() {
        if exp_b[d] == 0.0 || act_b[d] == 0.0 {
            bail!("{dataset}: baseline accuracy of zero gives no gain ratio");
        }
        let quadrant = texas_quadrant(exp_c[d] / exp_b[d], act_c[d] / act_b[d])
            .map_err(|e| anyhow::anyhow!("{dataset}: {e}"))?;
        let tag = match quadrant {
            GainQuadrant::TruePositive => {
                report.true_positive += 1;
                "TP"
            }
            GainQuadrant::FalsePositive => {
                report.false_positive += 1;
                "FP"
            }
            GainQuadrant::TrueNegative => {
                report.true_negative += 1;
                "TN"
            }
            GainQuadrant::FalseNegative => {
                report.false_negative += 1;
                "FN"
            }
        };
        report.per_dataset.push((dataset.clone(), tag.to_string()));
    }
    Ok(report)
}

/// Rounds every cell to eight decimals, the comparison convention.
pub fn round_matrix(matrix: &AccuracyMatrix) -> Result<AccuracyMatrix> {
    let rows: Vec<Vec<f64>> = (0..matrix.datasets.len())
        .map(|d| {
            (0..matrix.classifiers.len())
                .map(|c| round8(matrix.value(d, c)))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    AccuracyMatrix::new(
        matrix.classifiers.clone(),
        matrix.datasets.clone(),
        rows,
        CellSource::PublishedTable,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))
}
