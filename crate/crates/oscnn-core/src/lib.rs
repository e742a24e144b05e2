//! Omni-scale 1D-CNN building blocks for time series classification.
//!
//! The crate is organised around the pieces needed to build and train
//! omni-scale convolutional classifiers on a plain CPU:
//!
//! * [`kernel_config`]: prime-list kernel planning, receptive-field
//!   coverage, cost accounting, and channel-budget allocation.
//! * [`tensor`] / [`autograd`]: a dense `f64` tensor type and a minimal
//!   reverse-mode gradient tape with exactly the operators the models need.
//! * [`optim`]: Adam.
//! * [`models`]: the OS-CNN family (plain, residual, per-variate, ensemble)
//!   plus the FCN baseline used for budget matching and scale sweeps.
//! * [`dataset`]: in-memory labeled series collections and the standard
//!   transforms (z-normalization, right zero-padding).
//! * [`train`]: the unified training protocol with its batch-size rule, plateau
//!   learning-rate schedule, seeded deterministic runs.
//! * [`stats`]: accuracy-matrix comparisons, meaning pairwise wins, average ranks,
//!   Wilcoxon signed-rank with Holm correction, sharpshooter quadrants.
//!
//! Everything here is `no_std` + `alloc`; file formats, persistence and the
//! command-line front end live in the companion `oscnn` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autograd;
pub mod dataset;
pub mod kernel_config;
pub mod models;
pub mod optim;
pub mod stats;
pub mod synth;
pub mod tensor;
pub mod train;
