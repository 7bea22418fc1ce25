//! Reinforcement finetuning for autoregressive patch forecasters.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! pipeline:
//!
//! - [`series`] and [`synth`]: windows, splits, normalization and synthetic
//!   series with controlled distribution shifts.
//! - [`spectral`]: one-sided DFT, frequency weights and spectral entropy.
//! - [`reward`]: step-wise accuracy / variability / frequency / synergy rewards
//!   over a group of forecasts extended with the ground truth.
//! - [`advantage`]: piecewise reward shaping and reward-to-go group advantages.
//! - [`policy`]: a small autoregressive patch-Gaussian policy with an
//!   operation tape for exact reverse-mode gradients.
//! - [`selection`]: PICP and spectral-entropy based filtering of training
//!   windows.
//! - [`trainer`]: supervised and GRPO-style finetuning loops with Adam.
//! - [`eval`]: point-forecast metrics and paired comparisons.
//!
//! File formats, configuration and the command-line driver live in the
//! companion `timerft` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod advantage;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod selection;
pub mod series;
pub mod spectral;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
