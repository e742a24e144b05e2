//! Dense row-major `f64` tensors.
//!
//! Shapes are kept as plain dimension vectors; the models only ever use
//! rank 3 `(batch, channels, length)` activations, rank 2 `(rows, cols)`
//! classifier weights, and rank 1 vectors. Gradient bookkeeping lives in
//! [`crate::autograd`]; this type is just the storage.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("population of {0} is too small to normalize in training mode")]
    DegenerateBatch(usize),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> TensorError {
    TensorError::ShapeMismatch(msg.into())
}

pub(crate) fn arg_err(msg: impl Into<String>) -> TensorError {
    TensorError::InvalidArgument(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err(alloc::format!(
                "shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Dimensions of a `(batch, channels, length)` activation.
    pub fn dims3(&self) -> Result<(usize, usize, usize), TensorError> {
        match self.shape.as_slice() {
            &[b, c, l] => Ok((b, c, l)),
            other => Err(shape_err(alloc::format!(
                "expected rank-3 (batch, channels, length), got {other:?}"
            ))),
        }
    }

    /// Dimensions of a `(rows, cols)` matrix.
    pub fn dims2(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(shape_err(alloc::format!(
                "expected rank-2 (rows, cols), got {other:?}"
            ))),
        }
    }
}

/// Row-wise softmax of a `(rows, classes)` logit matrix, computed with the
/// usual max shift so large logits stay finite.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor, TensorError> {
    let (rows, classes) = logits.dims2()?;
    if classes == 0 {
        return Err(arg_err("softmax over zero classes"));
    }
    let mut out = vec![0.0; rows * classes];
    for r in 0..rows {
        let row = &logits.data()[r * classes..(r + 1) * classes];
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for (o, &z) in out[r * classes..(r + 1) * classes].iter_mut().zip(row) {
            *o = libm::exp(z - max);
            sum += *o;
        }
        for o in &mut out[r * classes..(r + 1) * classes] {
            *o /= sum;
        }
    }
    Tensor::new(vec![rows, classes], out)
}

/// Index of the largest entry per row; ties take the first index.
pub fn argmax_rows(t: &Tensor) -> Result<Vec<usize>, TensorError> {
    let (rows, cols) = t.dims2()?;
    if cols == 0 {
        return Err(arg_err("argmax over zero columns"));
    }
    Ok((0..rows)
        .map(|r| {
            let row = &t.data()[r * cols..(r + 1) * cols];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}
