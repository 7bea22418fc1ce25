//! Raw-space point-forecast metrics and paired comparisons.

use alloc::vec::Vec;

use crate::error::{invalid, shape, Error, Result};
use crate::matrix::Matrix;
use crate::policy::{point_forecast, PolicyParams};
use crate::rng::derive_seed;
use crate::series::ForecastWindow;

fn paired(pred: &Matrix, gt: &Matrix) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(shape!("prediction {:?} vs ground truth {:?}", pred.shape(), gt.shape()));
    }
    if gt.as_slice().is_empty() {
        return Err(Error::Empty("no points to score".into()));
    }
    Ok(())
}

pub fn mse(pred: &Matrix, gt: &Matrix) -> Result<f64> {
    paired(pred, gt)?;
    let n = gt.as_slice().len() as f64;
    Ok(pred.iter().zip(gt.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

pub fn mae(pred: &Matrix, gt: &Matrix) -> Result<f64> {
    paired(pred, gt)?;
    let n = gt.as_slice().len() as f64;
    Ok(pred.iter().zip(gt.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowScore {
    pub window_index: usize,
    pub origin_index: usize,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub per_window: Vec<WindowScore>,
    pub aggregate_mse: f64,
    pub aggregate_mae: f64,
    pub num_samples_used: usize,
    pub seed: u64,
}

/// Scores the mean of `num_samples` rollouts per window. Window `i` draws its
/// rollouts from `derive_seed(seed, i)`.
pub fn evaluate(params: &PolicyParams, windows: &[ForecastWindow], num_samples: usize, seed: u64) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Empty("no windows to evaluate".into()));
    }
    let per_window = windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let pred = point_forecast(params, w, num_samples, derive_seed(seed, i as u64))?;
            Ok(WindowScore { window_index: i, origin_index: w.origin_index, mse: mse(&pred, &w.target_y)?, mae: mae(&pred, &w.target_y)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_window.len() as f64;
    Ok(EvalReport {
        aggregate_mse: per_window.iter().map(|s| s.mse).sum::<f64>() / n,
        aggregate_mae: per_window.iter().map(|s| s.mae).sum::<f64>() / n,
        per_window,
        num_samples_used: num_samples,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonSummary {
    /// `100 * (b - a) / a` on aggregate MSE.
    pub delta_mse_pct: f64,
    pub delta_mae_pct: f64,
    /// Share of windows where `b` has lower MSE than `a`; ties count 0.5.
    pub win_rate: f64,
    pub num_windows: usize,
}

fn pct_change(a: f64, b: f64) -> Result<f64> {
    if a == 0.0 {
        if b == 0.0 {
            return Ok(0.0);
        }
        return Err(invalid!("relative change from a zero baseline"));
    }
    Ok(100.0 * (b - a) / a)
}

/// Compares `b` against the baseline `a` over the same windows.
pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<ComparisonSummary> {
    let same = a.per_window.len() == b.per_window.len()
        && a.per_window.iter().zip(&b.per_window).all(|(x, y)| x.window_index == y.window_index && x.origin_index == y.origin_index);
    if !same || a.per_window.is_empty() {
        return Err(invalid!("reports cover different window sets"));
    }
    let wins: f64 = a
        .per_window
        .iter()
        .zip(&b.per_window)
        .map(|(x, y)| match y.mse.partial_cmp(&x.mse) {
            Some(core::cmp::Ordering::Less) => 1.0,
            Some(core::cmp::Ordering::Equal) => 0.5,
            _ => 0.0,
        })
        .sum();
    Ok(ComparisonSummary {
        delta_mse_pct: pct_change(a.aggregate_mse, b.aggregate_mse)?,
        delta_mae_pct: pct_change(a.aggregate_mae, b.aggregate_mae)?,
        win_rate: wins / a.per_window.len() as f64,
        num_windows: a.per_window.len(),
    })
}
