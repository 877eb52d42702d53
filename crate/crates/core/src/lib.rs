//! Core engine for benchmarking hourly load forecasters on streams whose
//! distribution shifts mid-deployment.
//!
//! The crate is `no_std` + `alloc`: everything here operates on in-memory
//! frames and is a pure function of its inputs and seeds. File formats, CSV
//! ingestion, and the command-line front end live in the companion
//! `driftbench` crate.
//!
//! The pieces, bottom up:
//!
//! - [`timebase`]: hourly frames, calendar features, feature-set assembly,
//!   scaling, and supervised windowing.
//! - [`schedule`]: named, contiguous evaluation periods over the stream.
//! - [`synth`]: a seeded generator for regime-shifted synthetic datasets.
//! - [`numerics`]: dense tensors, reverse-mode autodiff, Adam, gradient
//!   clipping, and a finite-difference oracle.
//! - [`baselines`], [`linear`], [`neural`], [`continual`]: the model suite.
//! - [`harness`]: warm-up/validation/stream protocol, prequential
//!   evaluation, random-search tuning, seeded replication.
//! - [`report`]: error metrics, period ranking, improvement tables, and
//!   table emission.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod continual;
mod error;
pub(crate) mod fmath;
pub mod harness;
pub mod linear;
pub mod neural;
pub mod numerics;
pub mod report;
pub mod schedule;
pub mod synth;
pub mod timebase;

pub use error::{Error, Result};
