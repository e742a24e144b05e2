//! Archive file parsers and the dataset resolution layer.
//!
//! Two on-disk formats are understood:
//!
//! * tab-separated univariate files (`label<TAB>v1<TAB>v2…`, one series per
//!   line, `NaN` tokens marking missing values), and
//! * `.ts` files with `@directive` headers and colon-separated dimensions.
//!
//! Datasets resolve against a data root: an optional `manifest.json` maps
//! names to file paths, otherwise `<root>/<name>/<name>_TRAIN.{ts,tsv}` and
//! the matching `_TEST` file are tried. Files are never fetched here; a
//! fetch script belongs outside the library.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use oscnn_core::dataset::{DataError, DatasetPair, Split, TimeSeriesDataset};
use oscnn_core::tensor::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Syntax {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{}: empty dataset", path.display())]
    EmptyDataset { path: PathBuf },
    #[error("{}: unsupported: {msg}", path.display())]
    Unsupported { path: PathBuf, msg: String },
    #[error("dataset {name} not found under {} (no manifest entry, no conventional files)", root.display())]
    NotFound { name: String, root: PathBuf },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] oscnn_core::tensor::TensorError),
    #[error("{0}")]
    Json(String),
}

type Result<T> = std::result::Result<T, ParseError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ParseError + '_ {
    move |source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn syntax(path: &Path, line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Deterministic class order: numeric when every label parses as an integer,
/// lexicographic otherwise.
pub fn canonical_label_order(mut labels: Vec<String>) -> Vec<String> {
    labels.sort();
    labels.dedup();
    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i64>().unwrap());
    }
    labels
}

fn split_from_path(path: &Path) -> Split {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    if stem.to_ascii_uppercase().contains("_TEST") {
        Split::Test
    } else {
        Split::Train
    }
}

fn name_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    stem.trim_end_matches("_TRAIN")
        .trim_end_matches("_TEST")
        .trim_end_matches("_train")
        .trim_end_matches("_test")
        .to_string()
}

fn parse_value(token: &str, path: &Path, line: usize) -> Result<f64> {
    let t = token.trim();
    if t.eq_ignore_ascii_case("nan") || t == "?" {
        return Ok(f64::NAN);
    }
    t.parse::<f64>()
        .map_err(|_| syntax(path, line, format!("not a number: {t:?}")))
}

/// Parses a tab-separated univariate file: one series per line, the label
/// first. Lines of different lengths are accepted and mark the dataset as
/// unequal-length; use [`parse_ucr_tsv_strict`] to reject ragged lines.
pub fn parse_ucr_tsv(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    parse_ucr_tsv_impl(path.as_ref(), false)
}

/// As [`parse_ucr_tsv`], but a line whose length differs from the first
/// line's is a parse error (for archives documented as equal-length).
pub fn parse_ucr_tsv_strict(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    parse_ucr_tsv_impl(path.as_ref(), true)
}

fn parse_ucr_tsv_impl(path: &Path, expect_equal: bool) -> Result<TimeSeriesDataset> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    let mut raw_labels = Vec::new();
    let mut series = Vec::new();
    let mut first_len: Option<usize> = None;
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(['\t', ',']);
        let label = fields
            .next()
            .ok_or_else(|| syntax(path, line_no, "missing label"))?
            .trim()
            .to_string();
        if label.is_empty() {
            return Err(syntax(path, line_no, "empty label"));
        }
        let values: Vec<f64> = fields
            .map(|t| parse_value(t, path, line_no))
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(syntax(path, line_no, "series has no values"));
        }
        match first_len {
            None => first_len = Some(values.len()),
            Some(expected) if expect_equal && values.len() != expected => {
                return Err(syntax(
                    path,
                    line_no,
                    format!("ragged line: {} values, expected {expected}", values.len()),
                ));
            }
            _ => {}
        }
        raw_labels.push(label);
        series.push(values);
    }
    if series.is_empty() {
        return Err(ParseError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    let label_names = canonical_label_order(raw_labels.clone());
    let labels = raw_labels
        .iter()
        .map(|l| label_names.iter().position(|n| n == l).unwrap())
        .collect();
    let samples = series
        .into_iter()
        .map(|v| {
            let len = v.len();
            Tensor::new(vec![1, len], v).unwrap()
        })
        .collect();
    Ok(TimeSeriesDataset::new(
        name_from_path(path),
        split_from_path(path),
        samples,
        labels,
        label_names,
    )?)
}

/// Writes the dataset in the tab-separated univariate layout. Values print
/// in shortest round-trip form, so a parse reproduces them bit-exactly.
pub fn write_ucr_tsv(ds: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if ds.n_variates() != 1 {
        return Err(ParseError::Unsupported {
            path: path.to_path_buf(),
            msg: "tab-separated layout is univariate only".into(),
        });
    }
    let mut out = String::new();
    for (sample, &label) in ds.samples.iter().zip(&ds.labels) {
        out.push_str(&ds.label_names[label]);
        for v in sample.data() {
            out.push('\t');
            push_value(&mut out, *v);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn push_value(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("NaN");
    } else {
        out.push_str(&format!("{v}"));
    }
}

#[derive(Default)]
struct TsHeader {
    problem_name: Option<String>,
    univariate: Option<bool>,
    dimensions: Option<usize>,
    class_labels: Option<Vec<String>>,
    timestamps: bool,
    saw_data: bool,
}

/// Parses a `.ts` file: `@directive` headers, then one line per sample with
/// colon-separated dimensions, comma-separated values, and a trailing class
/// label. Timestamped and unlabeled variants are rejected explicitly.
pub fn parse_uea_ts(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    let mut header = TsHeader::default();
    let mut samples: Vec<Tensor> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut dim_count: Option<usize> = None;

    for (i, raw_line) in content.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header.saw_data {
            if let Some(directive) = line.strip_prefix('@') {
                parse_ts_directive(directive, &mut header, path, line_no)?;
                continue;
            }
            return Err(syntax(
                path,
                line_no,
                "data before the @data directive",
            ));
        }
        let class_labels = header.class_labels.as_ref().ok_or_else(|| {
            syntax(path, line_no, "@classLabel directive missing or false")
        })?;
        let mut segments: Vec<&str> = line.split(':').collect();
        if segments.len() < 2 {
            return Err(syntax(
                path,
                line_no,
                "expected dimensions and a trailing label separated by ':'",
            ));
        }
        let label = segments.pop().unwrap().trim().to_string();
        if !class_labels.contains(&label) {
            return Err(syntax(path, line_no, format!("unknown label {label:?}")));
        }
        match dim_count {
            None => {
                if let Some(declared) = header.dimensions {
                    if declared != segments.len() {
                        return Err(syntax(
                            path,
                            line_no,
                            format!(
                                "{} dimensions but the header declares {declared}",
                                segments.len()
                            ),
                        ));
                    }
                }
                if header.univariate == Some(true) && segments.len() != 1 {
                    return Err(syntax(
                        path,
                        line_no,
                        format!("{} dimensions in a univariate file", segments.len()),
                    ));
                }
                dim_count = Some(segments.len());
            }
            Some(expected) if segments.len() != expected => {
                return Err(syntax(
                    path,
                    line_no,
                    format!("{} dimensions, expected {expected}", segments.len()),
                ));
            }
            _ => {}
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(segments.len());
        for seg in &segments {
            let values: Vec<f64> = seg
                .split(',')
                .map(|t| parse_value(t, path, line_no))
                .collect::<Result<_>>()?;
            if values.is_empty() {
                return Err(syntax(path, line_no, "empty dimension"));
            }
            rows.push(values);
        }
        let len = rows[0].len();
        if rows.iter().any(|r| r.len() != len) {
            return Err(syntax(
                path,
                line_no,
                "dimensions of one sample differ in length",
            ));
        }
        let flat: Vec<f64> = rows.concat();
        samples.push(Tensor::new(vec![rows.len(), len], flat).unwrap());
        raw_labels.push(label);
    }

    if !header.saw_data {
        return Err(syntax(path, content.lines().count(), "missing @data directive"));
    }
    if samples.is_empty() {
        return Err(ParseError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    let label_names = canonical_label_order(header.class_labels.clone().unwrap());
    let labels = raw_labels
        .iter()
        .map(|l| label_names.iter().position(|n| n == l).unwrap())
        .collect();
    let name = header
        .problem_name
        .unwrap_or_else(|| name_from_path(path));
    Ok(TimeSeriesDataset::new(
        name,
        split_from_path(path),
        samples,
        labels,
        label_names,
    )?)
}

fn parse_ts_directive(
    directive: &str,
    header: &mut TsHeader,
    path: &Path,
    line_no: usize,
) -> Result<()> {
    let mut parts = directive.split_whitespace();
    let key = parts.next().unwrap_or("").to_ascii_lowercase();
    let rest: Vec<&str> = parts.collect();
    match key.as_str() {
        "problemname" => header.problem_name = rest.first().map(|s| s.to_string()),
        "univariate" => header.univariate = Some(rest.first() == Some(&"true")),
        "dimension" | "dimensions" => {
            header.dimensions = rest.first().and_then(|s| s.parse().ok());
        }
        "timestamps" => {
            if rest.first() == Some(&"true") {
                return Err(ParseError::Unsupported {
                    path: path.to_path_buf(),
                    msg: "timestamped series are not supported".into(),
                });
            }
            header.timestamps = false;
        }
        "classlabel" => {
            if rest.first() == Some(&"true") {
                let labels: Vec<String> = rest[1..].iter().map(|s| s.to_string()).collect();
                if labels.is_empty() {
                    return Err(syntax(path, line_no, "@classLabel true lists no labels"));
                }
                header.class_labels = Some(labels);
            } else {
                return Err(ParseError::Unsupported {
                    path: path.to_path_buf(),
                    msg: "only classification files (@classLabel true) are supported".into(),
                });
            }
        }
        "targetlabel" => {
            return Err(ParseError::Unsupported {
                path: path.to_path_buf(),
                msg: "regression (@targetlabel) files are not supported".into(),
            });
        }
        "data" => header.saw_data = true,
        // Remaining directives (equalLength, seriesLength, missing, …) are
        // advisory; lengths are measured from the data itself.
        _ => {}
    }
    Ok(())
}

/// Writes the dataset in `.ts` layout with a standard directive header.
pub fn write_uea_ts(ds: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("@problemName {}\n", ds.name));
    out.push_str("@timeStamps false\n");
    out.push_str(&format!(
        "@missing {}\n",
        if ds.has_missing() { "true" } else { "false" }
    ));
    out.push_str(&format!("@univariate {}\n", ds.n_variates() == 1));
    if ds.n_variates() > 1 {
        out.push_str(&format!("@dimensions {}\n", ds.n_variates()));
    }
    out.push_str(&format!("@equalLength {}\n", ds.equal_length));
    if let Some(len) = ds.series_len() {
        out.push_str(&format!("@seriesLength {len}\n"));
    }
    out.push_str(&format!("@classLabel true {}\n", ds.label_names.join(" ")));
    out.push_str("@data\n");
    for (sample, &label) in ds.samples.iter().zip(&ds.labels) {
        let (variates, len) = (sample.shape()[0], sample.shape()[1]);
        for v in 0..variates {
            if v > 0 {
                out.push(':');
            }
            for (t, value) in sample.data()[v * len..(v + 1) * len].iter().enumerate() {
                if t > 0 {
                    out.push(',');
                }
                push_value(&mut out, *value);
            }
        }
        out.push(':');
        out.push_str(&ds.label_names[label]);
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Replaces NaN runs by linear interpolation between finite neighbors;
/// leading and trailing runs take the nearest finite value. A row with no
/// finite value at all is an error.
pub fn interpolate_missing(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    let mut out = ds.clone();
    for (si, sample) in out.samples.iter_mut().enumerate() {
        let (variates, len) = sample.dims2()?;
        for v in 0..variates {
            let row = &mut sample.data_mut()[v * len..(v + 1) * len];
            if row.iter().all(|x| x.is_nan()) {
                return Err(ParseError::Data(DataError::Inconsistent(format!(
                    "sample {si} variate {v} has no finite values to interpolate from"
                ))));
            }
            interpolate_row(row);
        }
    }
    Ok(out)
}

fn interpolate_row(row: &mut [f64]) {
    let n = row.len();
    let mut i = 0;
    while i < n {
        if !row[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && row[i].is_nan() {
            i += 1;
        }
        let left = start.checked_sub(1).map(|j| row[j]);
        let right = (i < n).then(|| row[i]);
        match (left, right) {
            (Some(l), Some(r)) => {
                let span = (i - start + 1) as f64;
                for (k, slot) in row[start..i].iter_mut().enumerate() {
                    *slot = l + (r - l) * (k + 1) as f64 / span;
                }
            }
            (Some(l), None) => row[start..i].iter_mut().for_each(|s| *s = l),
            (None, Some(r)) => row[start..i].iter_mut().for_each(|s| *s = r),
            (None, None) => unreachable!("all-NaN rows are rejected before interpolation"),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    datasets: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    train: String,
    test: String,
}

fn parse_any(path: &Path) -> Result<TimeSeriesDataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ts") => parse_uea_ts(path),
        _ => parse_ucr_tsv(path),
    }
}

/// Loads a dataset's train and test splits from the data root.
///
/// A `manifest.json` at the root (`{"datasets": {NAME: {"train": PATH,
/// "test": PATH}}}`, paths relative to the root) takes priority; otherwise
/// `<root>/<name>/<name>_TRAIN.ts`, the `.tsv`/`.txt` variants, and the flat
/// `<root>/<name>_TRAIN.*` layout are tried. Label maps of the two splits
/// are unified onto their canonical order.
pub fn load_dataset(root: impl AsRef<Path>, name: &str) -> Result<DatasetPair> {
    let root = root.as_ref();
    let manifest_path = root.join("manifest.json");
    if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| ParseError::Json(e.to_string()))?;
        if let Some(entry) = manifest.datasets.get(name) {
            let train = parse_any(&root.join(&entry.train))?;
            let test = parse_any(&root.join(&entry.test))?;
            return unify_pair(train, test, name);
        }
    }
    for ext in ["ts", "tsv", "txt"] {
        for dir in [root.join(name), root.to_path_buf()] {
            let train_path = dir.join(format!("{name}_TRAIN.{ext}"));
            let test_path = dir.join(format!("{name}_TEST.{ext}"));
            if train_path.is_file() && test_path.is_file() {
                let train = parse_any(&train_path)?;
                let test = parse_any(&test_path)?;
                return unify_pair(train, test, name);
            }
        }
    }
    Err(ParseError::NotFound {
        name: name.to_string(),
        root: root.to_path_buf(),
    })
}

/// Remaps both splits onto the canonical order of their united label set.
fn unify_pair(
    mut train: TimeSeriesDataset,
    mut test: TimeSeriesDataset,
    name: &str,
) -> Result<DatasetPair> {
    let mut all = train.label_names.clone();
    all.extend(test.label_names.clone());
    let unified = canonical_label_order(all);
    for split in [&mut train, &mut test] {
        let remap: Vec<usize> = split
            .label_names
            .iter()
            .map(|l| unified.iter().position(|u| u == l).unwrap())
            .collect();
        for label in &mut split.labels {
            *label = remap[*label];
        }
        split.label_names = unified.clone();
        split.name = name.to_string();
    }
    train.split = Split::Train;
    test.split = Split::Test;
    Ok(DatasetPair::new(train, test)?)
}

/// Canonical JSON image of one split. Missing values map to `null` so the
/// dump stays valid JSON and round-trips exactly.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetDump {
    pub name: String,
    pub split: String,
    pub label_names: Vec<String>,
    pub labels: Vec<usize>,
    pub equal_length: bool,
    pub znormalized: bool,
    pub original_lengths: Option<Vec<usize>>,
    /// Per sample: variate count and row-major values.
    pub samples: Vec<SampleDump>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleDump {
    pub variates: usize,
    pub length: usize,
    pub values: Vec<Option<f64>>,
}

pub fn dataset_to_json(ds: &TimeSeriesDataset) -> String {
    let dump = DatasetDump {
        name: ds.name.clone(),
        split: match ds.split {
            Split::Train => "train".into(),
            Split::Test => "test".into(),
        },
        label_names: ds.label_names.clone(),
        labels: ds.labels.clone(),
        equal_length: ds.equal_length,
        znormalized: ds.znormalized,
        original_lengths: ds.original_lengths.clone(),
        samples: ds
            .samples
            .iter()
            .map(|s| SampleDump {
                variates: s.shape()[0],
                length: s.shape()[1],
                values: s
                    .data()
                    .iter()
                    .map(|&v| if v.is_nan() { None } else { Some(v) })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&dump).expect("dataset dump serializes")
}

pub fn dataset_from_json(text: &str) -> Result<TimeSeriesDataset> {
    let dump: DatasetDump =
        serde_json::from_str(text).map_err(|e| ParseError::Json(e.to_string()))?;
    let samples = dump
        .samples
        .iter()
        .map(|s| {
            Tensor::new(
                vec![s.variates, s.length],
                s.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            )
            .map_err(|e| ParseError::Json(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = TimeSeriesDataset::new(
        dump.name,
        if dump.split == "test" {
            Split::Test
        } else {
            Split::Train
        },
        samples,
        dump.labels,
        dump.label_names,
    )?;
    ds.znormalized = dump.znormalized;
    ds.original_lengths = dump.original_lengths;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write(dir: &TempDir, name: &str, content: &str) -> PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn tsv_line_layout() {
        let dir = TempDir::new().unwrap();
        let path = write(&dir, "Toy_TRAIN.tsv", "2\t0.1\t0.2\n1\t0.3\t0.4\n");
        let ds = parse_ucr_tsv(&path).unwrap();
        assert_eq!(ds.name, "Toy");
        assert_eq!(ds.split, Split::Train);
        assert_eq!(ds.label_names, vec!["1", "2"]);
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.samples[0].data(), &[0.1, 0.2]);
        assert!(ds.equal_length);
    }

    #[test]
    fn tsv_empty_file_is_an_error() {
        let dir = TempDir::new().unwrap();
        let path = write(&dir, "Empty_TRAIN.tsv", "");
        assert!(matches!(
            parse_ucr_tsv(&path),
            Err(ParseError::EmptyDataset { .. })
        ));
    }

    #[test]
    fn tsv_ragged_lines_mark_unequal_length() {
        let dir = TempDir::new().unwrap();
        let path = write(&dir, "Var_TRAIN.tsv", "1\t1\t2\t3\n2\t4\t5\t6\t7\n");
        let ds = parse_ucr_tsv(&path).unwrap();
        assert!(!ds.equal_length);
        // The strict variant rejects the same file with a line number.
        match parse_ucr_tsv_strict(&path) {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn tsv_bad_number_reports_line() {
        let dir = TempDir::new().unwrap();
        let path = write(&dir, "Bad_TRAIN.tsv", "1\t0.5\n1\tabc\n");
        match parse_ucr_tsv(&path) {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn tsv_nan_tokens_become_missing_markers() {
        let dir = TempDir::new().unwrap();
        let path = write(&dir, "Miss_TRAIN.tsv", "1\t0.5\tNaN\t0.7\n2\t1\t2\t3\n");
        let ds = parse_ucr_tsv(&path).unwrap();
        assert!(ds.samples[0].data()[1].is_nan());
        assert!(ds.has_missing());
    }

    #[test]
    fn ts_multivariate_line() {
        let dir = TempDir::new().unwrap();
        let path = write(
            &dir,
            "Multi_TRAIN.ts",
            "@problemName Multi\n@univariate false\n@classLabel true lab other\n@data\n1,2:3,4:lab\n5,6:7,8:other\n",
        );
        let ds = parse_uea_ts(&path).unwrap();
        assert_eq!(ds.n_variates(), 2);
        assert_eq!(ds.samples[0].shape(), &[2, 2]);
        assert_eq!(ds.samples[0].data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.label_names, vec!["lab", "other"]);
        assert_eq!(ds.labels, vec![0, 1]);
    }

    #[test]
    fn ts_univariate_header() {
        let dir = TempDir::new().unwrap();
        let path = write(
            &dir,
            "Uni_TRAIN.ts",
            "@problemName Uni\n@univariate true\n@classLabel true 1 2\n@data\n0.5,0.25:1\n",
        );
        let ds = parse_uea_ts(&path).unwrap();
        assert_eq!(ds.n_variates(), 1);
    }

    #[test]
    fn ts_missing_data_directive() {
        let dir = TempDir::new().unwrap();
        let path = write(
            &dir,
            "NoData_TRAIN.ts",
            "@problemName NoData\n@classLabel true a b\n1,2:a\n",
        );
        assert!(matches!(parse_uea_ts(&path), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn ts_dimension_mismatch_and_unknown_label() {
        let dir = TempDir::new().unwrap();
        let path = write(
            &dir,
            "DimErr_TRAIN.ts",
            "@classLabel true a\n@data\n1,2:3,4:a\n1,2:a\n",
        );
        assert!(matches!(parse_uea_ts(&path), Err(ParseError::Syntax { line: 4, .. })));
        let path = write(
            &dir,
            "LabErr_TRAIN.ts",
            "@classLabel true a\n@data\n1,2:b\n",
        );
        assert!(matches!(parse_uea_ts(&path), Err(ParseError::Syntax { line: 3, .. })));
    }

    #[test]
    fn ts_unsupported_variants_are_flagged() {
        let dir = TempDir::new().unwrap();
        let stamped = write(
            &dir,
            "Stamp_TRAIN.ts",
            "@timeStamps true\n@classLabel true a\n@data\n(0,1):a\n",
        );
        assert!(matches!(
            parse_uea_ts(&stamped),
            Err(ParseError::Unsupported { .. })
        ));
        let regression = write(
            &dir,
            "Reg_TRAIN.ts",
            "@targetlabel true\n@data\n1,2:0.5\n",
        );
        assert!(matches!(
            parse_uea_ts(&regression),
            Err(ParseError::Unsupported { .. })
        ));
    }

    #[test]
    fn roundtrip_is_bit_exact_for_both_formats() {
        let dir = TempDir::new().unwrap();
        let values = vec![
            0.1,
            -3.25e-7,
            f64::NAN,
            1.0 / 3.0,
            123456.789012345,
            -0.0,
        ];
        let samples = vec![
            Tensor::new(vec![1, 3], values[..3].to_vec()).unwrap(),
            Tensor::new(vec![1, 3], values[3..].to_vec()).unwrap(),
        ];
        let ds = TimeSeriesDataset::new(
            "Round".into(),
            Split::Train,
            samples,
            vec![0, 1],
            vec!["-1".into(), "1".into()],
        )
        .unwrap();

        let tsv = dir.path().join("Round_TRAIN.tsv");
        write_ucr_tsv(&ds, &tsv).unwrap();
        let back = parse_ucr_tsv(&tsv).unwrap();
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.labels, ds.labels);

        let ts = dir.path().join("Round_TRAIN.ts");
        write_uea_ts(&ds, &ts).unwrap();
        let back = parse_uea_ts(&ts).unwrap();
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }

        let json = dataset_to_json(&ds);
        let back = dataset_from_json(&json).unwrap();
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn label_map_is_a_bijection() {
        let dir = TempDir::new().unwrap();
        let path = write(
            &dir,
            "Lab_TRAIN.tsv",
            "3\t1\n1\t2\n10\t3\n3\t4\n1\t5\n",
        );
        let ds = parse_ucr_tsv(&path).unwrap();
        // Numeric-aware order, each original label exactly once.
        assert_eq!(ds.label_names, vec!["1", "3", "10"]);
        for (i, name) in ds.label_names.iter().enumerate() {
            assert_eq!(ds.label_names.iter().position(|n| n == name), Some(i));
        }
    }

    #[test]
    fn load_dataset_by_convention_and_manifest() {
        let dir = TempDir::new().unwrap();
        fs::create_dir(dir.path().join("Toy")).unwrap();
        fs::write(dir.path().join("Toy/Toy_TRAIN.tsv"), "1\t1\t2\n2\t3\t4\n").unwrap();
        fs::write(dir.path().join("Toy/Toy_TEST.tsv"), "2\t5\t6\n1\t7\t8\n").unwrap();
        let pair = load_dataset(dir.path(), "Toy").unwrap();
        assert_eq!(pair.name(), "Toy");
        assert_eq!(pair.train.split, Split::Train);
        assert_eq!(pair.test.split, Split::Test);
        assert_eq!(pair.train.label_names, pair.test.label_names);

        fs::write(
            dir.path().join("manifest.json"),
            r#"{"datasets": {"Alias": {"train": "Toy/Toy_TRAIN.tsv", "test": "Toy/Toy_TEST.tsv"}}}"#,
        )
        .unwrap();
        let pair = load_dataset(dir.path(), "Alias").unwrap();
        assert_eq!(pair.name(), "Alias");
        assert!(matches!(
            load_dataset(dir.path(), "Nope"),
            Err(ParseError::NotFound { .. })
        ));
    }

    #[test]
    fn interpolation_fills_interior_and_edges() {
        let samples = vec![Tensor::new(
            vec![1, 6],
            vec![f64::NAN, 1.0, f64::NAN, f64::NAN, 4.0, f64::NAN],
        )
        .unwrap()];
        let ds = TimeSeriesDataset::new(
            "I".into(),
            Split::Train,
            samples,
            vec![0],
            vec!["a".into()],
        )
        .unwrap();
        let fixed = interpolate_missing(&ds).unwrap();
        assert_eq!(fixed.samples[0].data(), &[1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);

        let all_nan = TimeSeriesDataset::new(
            "J".into(),
            Split::Train,
            vec![Tensor::new(vec![1, 2], vec![f64::NAN, f64::NAN]).unwrap()],
            vec![0],
            vec!["a".into()],
        )
        .unwrap();
        assert!(interpolate_missing(&all_nan).is_err());
    }
}
