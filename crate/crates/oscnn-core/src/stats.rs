//! Comparison machinery over accuracy matrices.
//!
//! Accuracies are rounded to eight decimals before win/loss comparisons,
//! classifiers are ordered by average rank across datasets, and pairwise
//! differences run through a two-sided Wilcoxon signed-rank test with Holm's
//! step-down correction. Classifiers whose pairwise differences survive no
//! rejection group into maximal cliques, the data behind a critical
//! difference diagram.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

type Result<T> = core::result::Result<T, StatsError>;

fn invalid(msg: impl Into<String>) -> StatsError {
    StatsError::InvalidArgument(msg.into())
}

/// Where one accuracy cell came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum CellSource {
    OwnRun,
    PublishedTable,
}

/// Rectangular accuracy table: one row per dataset, one column per
/// classifier, every cell in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AccuracyMatrix {
    pub classifiers: Vec<String>,
    pub datasets: Vec<String>,
    values: Vec<f64>,
    provenance: Vec<CellSource>,
}

impl AccuracyMatrix {
    /// `rows[d][c]` is the accuracy of classifier `c` on dataset `d`.
    pub fn new(
        classifiers: Vec<String>,
        datasets: Vec<String>,
        rows: Vec<Vec<f64>>,
        source: CellSource,
    ) -> Result<Self> {
        if classifiers.is_empty() || datasets.is_empty() {
            return Err(invalid("matrix needs at least one classifier and dataset"));
        }
        if rows.len() != datasets.len() {
            return Err(StatsError::LengthMismatch(alloc::format!(
                "{} rows for {} datasets",
                rows.len(),
                datasets.len()
            )));
        }
        let mut values = Vec::with_capacity(classifiers.len() * datasets.len());
        for (d, row) in rows.iter().enumerate() {
            if row.len() != classifiers.len() {
                return Err(StatsError::LengthMismatch(alloc::format!(
                    "row {d} holds {} cells for {} classifiers",
                    row.len(),
                    classifiers.len()
                )));
            }
            for &v in row {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(alloc::format!("accuracy {v} outside [0, 1]")));
                }
                values.push(v);
            }
        }
        let provenance = vec![source; values.len()];
        Ok(Self {
            classifiers,
            datasets,
            values,
            provenance,
        })
    }

    pub fn value(&self, dataset: usize, classifier: usize) -> f64 {
        self.values[dataset * self.classifiers.len() + classifier]
    }

    pub fn source(&self, dataset: usize, classifier: usize) -> CellSource {
        self.provenance[dataset * self.classifiers.len() + classifier]
    }

    pub fn set_source(&mut self, dataset: usize, classifier: usize, source: CellSource) {
        self.provenance[dataset * self.classifiers.len() + classifier] = source;
    }

    /// Accuracies of one classifier across all datasets.
    pub fn column(&self, classifier: usize) -> Vec<f64> {
        (0..self.datasets.len())
            .map(|d| self.value(d, classifier))
            .collect()
    }

    pub fn classifier_index(&self, name: &str) -> Option<usize> {
        self.classifiers.iter().position(|c| c == name)
    }
}

/// Half-up rounding to eight decimal places; accuracies only.
pub fn round8(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(alloc::format!("accuracy {x} outside [0, 1]")));
    }
    Ok(libm::floor(x * 1e8 + 0.5) / 1e8)
}

/// Per-dataset win/loss/tie counts after eight-decimal rounding.
pub fn pairwise_wins(a: &[f64], b: &[f64]) -> Result<(usize, usize, usize)> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(alloc::format!(
            "{} vs {} accuracies",
            a.len(),
            b.len()
        )));
    }
    let (mut wa, mut wb, mut ties) = (0, 0, 0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (round8(x)?, round8(y)?);
        if x > y {
            wa += 1;
        } else if y > x {
            wb += 1;
        } else {
            ties += 1;
        }
    }
    Ok((wa, wb, ties))
}

/// Ranks a slice descending (1 = largest), ties sharing the mean rank.
fn rank_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut pos = 0;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len() && values[order[end]] == values[order[pos]] {
            end += 1;
        }
        let mean_rank = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            ranks[idx] = mean_rank;
        }
        pos = end;
    }
    ranks
}

/// Mean rank per classifier over all datasets (1 = best accuracy; ties share
/// the mean rank).
pub fn average_ranks(matrix: &AccuracyMatrix) -> Result<Vec<f64>> {
    let k = matrix.classifiers.len();
    if k < 2 {
        return Err(invalid("ranking needs at least two classifiers"));
    }
    let mut sums = vec![0.0; k];
    for d in 0..matrix.datasets.len() {
        let row: Vec<f64> = (0..k).map(|c| matrix.value(d, c)).collect();
        for (s, r) in sums.iter_mut().zip(rank_descending(&row)) {
            *s += r;
        }
    }
    let n = matrix.datasets.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum TestMethod {
    /// Full enumeration of the signed-rank distribution (n ≤ 12).
    Exact,
    /// Normal approximation with tie correction.
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WilcoxonResult {
    /// Differences remaining after zero removal.
    pub n_effective: usize,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Rank magnitudes ascending with mean ranks for ties, doubled so every rank
/// is integral even at `.5`.
fn doubled_ranks(abs_d: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs_d.len()).collect();
    order.sort_by(|&i, &j| abs_d[i].partial_cmp(&abs_d[j]).unwrap());
    let mut out = vec![0u64; abs_d.len()];
    let mut pos = 0;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len() && abs_d[order[end]] == abs_d[order[pos]] {
            end += 1;
        }
        // doubled mean rank of positions pos..end (1-based): (pos+1) + end
        let doubled = (pos + 1 + end) as u64;
        for &idx in &order[pos..end] {
            out[idx] = doubled;
        }
        pos = end;
    }
    out
}

/// Two-sided Wilcoxon signed-rank test on paired accuracies. Zero
/// differences are dropped; with twelve or fewer informative pairs the exact
/// sign-enumeration distribution is used, otherwise the tie-corrected normal
/// approximation. All differences zero gives `p = 1` by convention.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(alloc::format!(
            "{} vs {} accuracies",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            n_effective: 0,
            w_plus: 0.0,
            p_value: 1.0,
            method: TestMethod::Exact,
        });
    }
    let abs_d: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks2 = doubled_ranks(&abs_d);
    let w_plus2: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &r)| r)
        .sum();
    let w_plus = w_plus2 as f64 / 2.0;

    if n <= 12 {
        // Enumerate every sign assignment of the observed ranks.
        let total = 1u64 << n;
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0..total {
            let mut w = 0u64;
            for (bit, &r) in ranks2.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    w += r;
                }
            }
            if w <= w_plus2 {
                le += 1;
            }
            if w >= w_plus2 {
                ge += 1;
            }
        }
        let p = 2.0 * (le.min(ge) as f64) / total as f64;
        Ok(WilcoxonResult {
            n_effective: n,
            w_plus,
            p_value: p.min(1.0),
            method: TestMethod::Exact,
        })
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut var_num = nf * (nf + 1.0) * (2.0 * nf + 1.0);
        // Tie correction: subtract (t³ − t)/2 per tie group before /24.
        let mut pos = 0;
        let mut sorted = abs_d.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        while pos < sorted.len() {
            let mut end = pos + 1;
            while end < sorted.len() && sorted[end] == sorted[pos] {
                end += 1;
            }
            let t = (end - pos) as f64;
            var_num -= (t * t * t - t) / 2.0;
            pos = end;
        }
        let sigma = libm::sqrt(var_num / 24.0);
        let p = if sigma == 0.0 {
            1.0
        } else {
            let z = (w_plus - mean) / sigma;
            libm::erfc(z.abs() / core::f64::consts::SQRT_2)
        };
        Ok(WilcoxonResult {
            n_effective: n,
            w_plus,
            p_value: p.min(1.0),
            method: TestMethod::NormalApprox,
        })
    }
}

/// One classifier pair in a Holm-corrected comparison.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PairComparison {
    pub a: usize,
    pub b: usize,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub significant: bool,
    pub method: TestMethod,
}

/// Everything a critical-difference rendering needs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CriticalDifference {
    pub alpha: f64,
    pub classifiers: Vec<String>,
    pub average_ranks: Vec<f64>,
    pub pairs: Vec<PairComparison>,
    /// Maximal groups of classifiers with no significant pairwise
    /// difference, each sorted by average rank, groups ordered by their best
    /// member.
    pub cliques: Vec<Vec<usize>>,
}

/// Holm step-down adjustment; returns adjusted p-values in input order.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running_max = 0.0f64;
    for (k, &idx) in order.iter().enumerate() {
        let scaled = ((m - k) as f64) * p_values[idx];
        running_max = running_max.max(scaled.min(1.0));
        adjusted[idx] = running_max;
    }
    adjusted
}

/// Bron–Kerbosch maximal-clique enumeration over a small adjacency matrix.
fn maximal_cliques(adjacent: &[Vec<bool>]) -> Vec<Vec<usize>> {
    fn extend(
        r: &mut Vec<usize>,
        mut p: BTreeSet<usize>,
        mut x: BTreeSet<usize>,
        adjacent: &[Vec<bool>],
        out: &mut Vec<Vec<usize>>,
    ) {
        if p.is_empty() && x.is_empty() {
            out.push(r.clone());
            return;
        }
        let candidates: Vec<usize> = p.iter().copied().collect();
        for v in candidates {
            if !p.contains(&v) {
                continue;
            }
            let neighbors: BTreeSet<usize> = (0..adjacent.len())
                .filter(|&u| adjacent[v][u])
                .collect();
            r.push(v);
            extend(
                r,
                p.intersection(&neighbors).copied().collect(),
                x.intersection(&neighbors).copied().collect(),
                adjacent,
                out,
            );
            r.pop();
            p.remove(&v);
            x.insert(v);
        }
    }
    let mut out = Vec::new();
    let all: BTreeSet<usize> = (0..adjacent.len()).collect();
    extend(&mut Vec::new(), all, BTreeSet::new(), adjacent, &mut out);
    out
}

/// Full pairwise comparison: Wilcoxon per pair, Holm correction across all
/// pairs at `alpha`, ranks, and the not-significantly-different cliques.
pub fn wilcoxon_holm(matrix: &AccuracyMatrix, alpha: f64) -> Result<CriticalDifference> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    let k = matrix.classifiers.len();
    if k < 2 {
        return Err(invalid("comparison needs at least two classifiers"));
    }
    let ranks = average_ranks(matrix)?;
    let mut pairs = Vec::new();
    let mut raw_p = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let res = wilcoxon_signed_rank(&matrix.column(a), &matrix.column(b))?;
            raw_p.push(res.p_value);
            pairs.push((a, b, res));
        }
    }
    let adjusted = holm_adjust(&raw_p);
    let pairs: Vec<PairComparison> = pairs
        .into_iter()
        .zip(&adjusted)
        .map(|((a, b, res), &p_adjusted)| PairComparison {
            a,
            b,
            p_value: res.p_value,
            p_adjusted,
            significant: p_adjusted < alpha,
            method: res.method,
        })
        .collect();

    // Classifiers are adjacent when their difference is *not* significant.
    let mut adjacent = vec![vec![false; k]; k];
    for p in &pairs {
        if !p.significant {
            adjacent[p.a][p.b] = true;
            adjacent[p.b][p.a] = true;
        }
    }
    let mut cliques = maximal_cliques(&adjacent);
    for clique in &mut cliques {
        clique.sort_by(|&i, &j| ranks[i].partial_cmp(&ranks[j]).unwrap());
    }
    cliques.sort_by(|a, b| ranks[a[0]].partial_cmp(&ranks[b[0]]).unwrap());
    Ok(CriticalDifference {
        alpha,
        classifiers: matrix.classifiers.clone(),
        average_ranks: ranks,
        pairs,
        cliques,
    })
}

/// Quadrants of an expected-versus-actual gain plot. Gains are accuracy
/// ratios (candidate / baseline): the expected one estimated on training
/// data, the actual one measured on test data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum GainQuadrant {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

pub fn texas_quadrant(expected_gain: f64, actual_gain: f64) -> Result<GainQuadrant> {
    if expected_gain <= 0.0 || actual_gain <= 0.0 {
        return Err(invalid("gain ratios must be positive"));
    }
    Ok(match (expected_gain > 1.0, actual_gain > 1.0) {
        (true, true) => GainQuadrant::TruePositive,
        (true, false) => GainQuadrant::FalsePositive,
        (false, false) => GainQuadrant::TrueNegative,
        (false, true) => GainQuadrant::FalseNegative,
    })
}

/// Per-dataset accuracy deltas `candidate − baseline`, sorted ascending by
/// delta.
pub fn relative_accuracy(
    datasets: &[String],
    candidate: &[f64],
    baseline: &[f64],
) -> Result<Vec<(String, f64)>> {
    if candidate.len() != baseline.len() || candidate.len() != datasets.len() {
        return Err(StatsError::LengthMismatch(
            "dataset, candidate and baseline lists must align".into(),
        ));
    }
    let mut out: Vec<(String, f64)> = datasets
        .iter()
        .cloned()
        .zip(candidate.iter().zip(baseline).map(|(c, b)| c - b))
        .collect();
    out.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
    Ok(out)
}
