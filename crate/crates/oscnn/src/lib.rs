//! IO, persistence and the command-line front end for the omni-scale
//! time-series classifiers. The numerical substance lives in `oscnn-core`;
//! this crate adds the pieces that need a filesystem and a clock: archive
//! parsers, checkpoints, the protocol runner, report emission, and the
//! `oscnn` binary.

pub mod checkpoint;
pub mod cli;
pub mod data_io;
pub mod experiment;
pub mod report;

pub use oscnn_core as core;
