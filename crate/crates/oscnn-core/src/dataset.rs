//! In-memory labeled time-series collections and the standard transforms.
//!
//! A dataset is one split (train or test) of named samples; each sample is a
//! `(variates, length)` matrix, so unequal-length collections are
//! representable directly. Missing values travel as NaN and are rejected at
//! training time unless interpolated away first.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Split {
    Train,
    Test,
}

/// One split of a labeled time-series collection.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub split: Split,
    /// `(variates, length)` matrices; lengths may differ across samples.
    pub samples: Vec<Tensor>,
    /// Class ids, indexes into `label_names`.
    pub labels: Vec<usize>,
    /// Original label strings; position is the class id.
    pub label_names: Vec<String>,
    pub equal_length: bool,
    /// Lengths before padding, when [`pad_to_max`] was applied.
    pub original_lengths: Option<Vec<usize>>,
    pub znormalized: bool,
}

impl TimeSeriesDataset {
    pub fn new(
        name: String,
        split: Split,
        samples: Vec<Tensor>,
        labels: Vec<usize>,
        label_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::Empty);
        }
        if samples.len() != labels.len() {
            return Err(DataError::Inconsistent(alloc::format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let variates = samples[0].dims2()?.0;
        for (i, s) in samples.iter().enumerate() {
            let (v, l) = s.dims2()?;
            if v != variates {
                return Err(DataError::Inconsistent(alloc::format!(
                    "sample {i} has {v} variates, expected {variates}"
                )));
            }
            if l == 0 {
                return Err(DataError::Inconsistent(alloc::format!("sample {i} is empty")));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(DataError::Inconsistent(alloc::format!(
                "label id {bad} outside the {}-class map",
                label_names.len()
            )));
        }
        let first_len = samples[0].dims2()?.1;
        let equal_length = samples.iter().all(|s| s.dims2().unwrap().1 == first_len);
        Ok(Self {
            name,
            split,
            samples,
            labels,
            label_names,
            equal_length,
            original_lengths: None,
            znormalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_variates(&self) -> usize {
        self.samples[0].shape()[0]
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Common series length; `None` when lengths vary.
    pub fn series_len(&self) -> Option<usize> {
        self.equal_length.then(|| self.samples[0].shape()[1])
    }

    pub fn has_missing(&self) -> bool {
        self.samples
            .iter()
            .any(|s| s.data().iter().any(|v| v.is_nan()))
    }

    /// Stacks the selected samples into a `(batch, variates, length)` tensor.
    /// Requires equal lengths; pad first otherwise.
    pub fn assemble_batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>), DataError> {
        let len = self.series_len().ok_or_else(|| {
            DataError::Inconsistent("cannot batch unequal-length samples; pad first".into())
        })?;
        let variates = self.n_variates();
        let mut data = Vec::with_capacity(indices.len() * variates * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.samples[i].data());
            labels.push(self.labels[i]);
        }
        Ok((
            Tensor::new(vec![indices.len(), variates, len], data)?,
            labels,
        ))
    }
}

/// The archive's own train/test split of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub train: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
}

impl DatasetPair {
    pub fn new(train: TimeSeriesDataset, test: TimeSeriesDataset) -> Result<Self, DataError> {
        if train.n_variates() != test.n_variates() {
            return Err(DataError::Inconsistent(
                "train and test disagree on the variate count".into(),
            ));
        }
        if train.label_names != test.label_names {
            return Err(DataError::Inconsistent(
                "train and test label maps differ".into(),
            ));
        }
        Ok(Self { train, test })
    }

    pub fn name(&self) -> &str {
        &self.train.name
    }
}

/// Rescales one series to zero mean and unit population standard deviation.
/// Constant series (and series with fewer than two finite values) become all
/// zeros; NaN entries are left in place so missing markers survive.
pub fn znormalize_series(values: &mut [f64]) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        for v in values.iter_mut() {
            if v.is_finite() {
                *v = 0.0;
            }
        }
        return;
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var == 0.0 {
        for v in values.iter_mut() {
            if v.is_finite() {
                *v = 0.0;
            }
        }
        return;
    }
    let inv_std = 1.0 / libm::sqrt(var);
    for v in values.iter_mut() {
        if v.is_finite() {
            *v = (*v - mean) * inv_std;
        }
    }
}

/// Z-normalizes every variate row of every sample.
pub fn znormalize_dataset(ds: &TimeSeriesDataset) -> TimeSeriesDataset {
    let mut out = ds.clone();
    for sample in &mut out.samples {
        let (variates, len) = sample.dims2().unwrap();
        for v in 0..variates {
            znormalize_series(&mut sample.data_mut()[v * len..(v + 1) * len]);
        }
    }
    out.znormalized = true;
    out
}

/// Right zero-pads every sample to the longest series in the split, keeping
/// the original lengths in the metadata. Equal-length input passes through
/// unchanged.
pub fn pad_to_max(ds: &TimeSeriesDataset) -> TimeSeriesDataset {
    if ds.equal_length {
        return ds.clone();
    }
    let max_len = ds.samples.iter().map(|s| s.shape()[1]).max().unwrap_or(0);
    pad_to_length(ds, max_len).unwrap()
}

/// Right zero-pads every sample to `target_len` (needed when train and test
/// splits must agree on a common length).
pub fn pad_to_length(
    ds: &TimeSeriesDataset,
    target_len: usize,
) -> Result<TimeSeriesDataset, DataError> {
    let mut out = ds.clone();
    let mut originals = Vec::with_capacity(ds.samples.len());
    let mut changed = false;
    for sample in &mut out.samples {
        let (variates, len) = sample.dims2()?;
        if len > target_len {
            return Err(DataError::Inconsistent(alloc::format!(
                "sample of length {len} exceeds the padding target {target_len}"
            )));
        }
        originals.push(len);
        if len == target_len {
            continue;
        }
        changed = true;
        let mut padded = vec![0.0; variates * target_len];
        for v in 0..variates {
            padded[v * target_len..v * target_len + len]
                .copy_from_slice(&sample.data()[v * len..(v + 1) * len]);
        }
        *sample = Tensor::new(vec![variates, target_len], padded)?;
    }
    if changed {
        out.original_lengths = Some(originals);
    }
    out.equal_length = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(values: Vec<f64>) -> Tensor {
        let len = values.len();
        Tensor::new(vec![1, len], values).unwrap()
    }

    fn tiny(samples: Vec<Tensor>, labels: Vec<usize>) -> TimeSeriesDataset {
        TimeSeriesDataset::new(
            "tiny".into(),
            Split::Train,
            samples,
            labels,
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn znormalize_examples() {
        let mut v = [1.0, 2.0, 3.0];
        znormalize_series(&mut v);
        assert!((v[0] + 1.224745).abs() < 1e-6);
        assert!(v[1].abs() < 1e-12);
        assert!((v[2] - 1.224745).abs() < 1e-6);

        let mut c = [5.0, 5.0, 5.0];
        znormalize_series(&mut c);
        assert_eq!(c, [0.0, 0.0, 0.0]);

        // Idempotence on an already-normalized series.
        let mut w = v;
        znormalize_series(&mut w);
        for (a, b) in w.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn znormalize_keeps_missing_markers() {
        let mut v = [1.0, f64::NAN, 3.0, 5.0];
        znormalize_series(&mut v);
        assert!(v[1].is_nan());
        let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        let mean: f64 = finite.iter().sum::<f64>() / finite.len() as f64;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn pad_examples() {
        let ds = tiny(
            vec![uni(vec![1.0, 2.0, 3.0]), uni(vec![4.0, 5.0, 6.0, 7.0, 8.0])],
            vec![0, 1],
        );
        assert!(!ds.equal_length);
        let padded = pad_to_max(&ds);
        assert!(padded.equal_length);
        assert_eq!(padded.samples[0].shape(), &[1, 5]);
        assert_eq!(padded.samples[0].data(), &[1.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(padded.original_lengths, Some(vec![3, 5]));

        let equal = tiny(vec![uni(vec![1.0, 2.0]), uni(vec![3.0, 4.0])], vec![0, 1]);
        let same = pad_to_max(&equal);
        assert_eq!(same, equal);
    }

    #[test]
    fn batching_requires_equal_lengths() {
        let ds = tiny(
            vec![uni(vec![1.0, 2.0]), uni(vec![3.0, 4.0, 5.0])],
            vec![0, 1],
        );
        assert!(ds.assemble_batch(&[0, 1]).is_err());
        let padded = pad_to_max(&ds);
        let (batch, labels) = padded.assemble_batch(&[1, 0]).unwrap();
        assert_eq!(batch.shape(), &[2, 1, 3]);
        assert_eq!(batch.data(), &[3.0, 4.0, 5.0, 1.0, 2.0, 0.0]);
        assert_eq!(labels, vec![1, 0]);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            TimeSeriesDataset::new("x".into(), Split::Train, vec![], vec![], vec![]),
            Err(DataError::Empty)
        ));
        let bad_label = TimeSeriesDataset::new(
            "x".into(),
            Split::Train,
            vec![uni(vec![1.0])],
            vec![2],
            vec!["a".into(), "b".into()],
        );
        assert!(bad_label.is_err());
        let mixed_variates = TimeSeriesDataset::new(
            "x".into(),
            Split::Train,
            vec![uni(vec![1.0]), Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap()],
            vec![0, 1],
            vec!["a".into(), "b".into()],
        );
        assert!(mixed_variates.is_err());
    }
}
