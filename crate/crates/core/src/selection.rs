//! Difficulty-based filtering of training windows.
//!
//! A window is dropped when the initial policy already covers it tightly
//! (50% interval coverage above a threshold), when even the wide 90% interval
//! misses most of it, or when its spectral entropy marks it as noise-like.

use alloc::vec::Vec;

use crate::error::{invalid, shape, Error, Result};
use crate::matrix::Matrix;
use crate::policy::{sample_paths, PolicyParams};
use crate::series::ForecastWindow;
use crate::spectral::{spectral_entropy, SE_SEGMENT_LEN};

/// How per-variate spectral entropies are reduced to one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SeReduction {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SelectionThresholds {
    pub picp50_easy: f64,
    pub picp90_hard: f64,
    pub se_max: f64,
    pub num_samples: usize,
    pub q_pairs: [(f64, f64); 2],
    pub se_reduction: SeReduction,
    /// Segment length of the averaged periodogram (0 = single periodogram).
    pub se_segment_len: usize,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        Self {
            picp50_easy: 0.70,
            picp90_hard: 0.70,
            se_max: 0.5,
            num_samples: 100,
            q_pairs: [(0.25, 0.75), (0.05, 0.95)],
            se_reduction: SeReduction::Mean,
            se_segment_len: SE_SEGMENT_LEN,
        }
    }
}

impl SelectionThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("picp50_easy", self.picp50_easy), ("picp90_hard", self.picp90_hard), ("se_max", self.se_max)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid!("{name} must lie in [0, 1]"));
            }
        }
        if self.num_samples < 2 {
            return Err(invalid!("num_samples must be >= 2"));
        }
        for &(lo, hi) in &self.q_pairs {
            check_quantiles(lo, hi)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Decision {
    Kept,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DropReason {
    None,
    EasyPICP,
    HardPICP,
    HighSE,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionVerdict {
    pub decision: Decision,
    pub reason: DropReason,
    pub picp50: f64,
    pub picp90: f64,
    pub se: f64,
}

fn check_quantiles(lo: f64, hi: f64) -> Result<()> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(invalid!("quantile pair ({lo}, {hi}) must satisfy 0 <= low < high <= 1"));
    }
    Ok(())
}

/// Sample quantile with linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample).
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = q * (n - 1) as f64;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Point-wise `(q_low, q_high)` quantiles across sample paths.
pub fn quantile_bounds(paths: &[Matrix], q_low: f64, q_high: f64) -> Result<(Matrix, Matrix)> {
    check_quantiles(q_low, q_high)?;
    let first = paths.first().ok_or_else(|| Error::Empty("no sample paths".into()))?;
    let (rows, cols) = first.shape();
    for p in paths {
        p.ensure_shape(rows, cols, "sample path")?;
    }
    let mut low = Matrix::zeros(rows, cols);
    let mut high = Matrix::zeros(rows, cols);
    let mut column = Vec::with_capacity(paths.len());
    for r in 0..rows {
        for c in 0..cols {
            column.clear();
            column.extend(paths.iter().map(|p| p.get(r, c)));
            column.sort_by(f64::total_cmp);
            low.set(r, c, empirical_quantile(&column, q_low));
            high.set(r, c, empirical_quantile(&column, q_high));
        }
    }
    Ok((low, high))
}

/// Interval bounds from `num_samples` policy rollouts.
pub fn interval_bounds(
    policy: &PolicyParams,
    window: &ForecastWindow,
    num_samples: usize,
    q_low: f64,
    q_high: f64,
    seed: u64,
) -> Result<(Matrix, Matrix)> {
    check_quantiles(q_low, q_high)?;
    if num_samples < 2 {
        return Err(invalid!("need at least 2 samples for interval bounds"));
    }
    quantile_bounds(&sample_paths(policy, window, num_samples, seed)?, q_low, q_high)
}

/// Share of points with `low <= y <= high`.
pub fn picp(gt: &Matrix, low: &Matrix, high: &Matrix) -> Result<f64> {
    if gt.shape() != low.shape() || gt.shape() != high.shape() {
        return Err(shape!("ground truth and bounds must share a shape"));
    }
    let mut covered = 0usize;
    for r in 0..gt.rows() {
        for c in 0..gt.cols() {
            let (l, h, y) = (low.get(r, c), high.get(r, c), gt.get(r, c));
            if l > h {
                return Err(Error::BoundInversion { row: r, col: c });
            }
            if y >= l && y <= h {
                covered += 1;
            }
        }
    }
    let n = gt.rows() * gt.cols();
    if n == 0 {
        return Err(Error::Empty("no points to cover".into()));
    }
    Ok(covered as f64 / n as f64)
}

/// Spectral entropy of `y_{1:L+H}` reduced over target variates.
pub fn window_spectral_entropy(window: &ForecastWindow, th: &SelectionThresholds) -> Result<f64> {
    let nd = window.num_targets();
    let values: Vec<f64> = (0..nd)
        .map(|d| spectral_entropy(&window.full_channel(d), th.se_segment_len))
        .collect::<Result<_>>()?;
    Ok(match th.se_reduction {
        SeReduction::Mean => values.iter().sum::<f64>() / nd as f64,
        SeReduction::Max => values.iter().copied().fold(0.0, f64::max),
    })
}

/// Verdict for one window from already-computed statistics; criteria are
/// checked in order easy, hard, high entropy.
pub fn verdict_from_stats(picp50: f64, picp90: f64, se: f64, th: &SelectionThresholds) -> SelectionVerdict {
    let reason = if picp50 > th.picp50_easy {
        DropReason::EasyPICP
    } else if picp90 < th.picp90_hard {
        DropReason::HardPICP
    } else if se > th.se_max {
        DropReason::HighSE
    } else {
        DropReason::None
    };
    let decision = if reason == DropReason::None { Decision::Kept } else { Decision::Dropped };
    SelectionVerdict { decision, reason, picp50, picp90, se }
}

/// Scores `window` under the initial `policy`.
pub fn select(window: &ForecastWindow, policy: &PolicyParams, th: &SelectionThresholds, seed: u64) -> Result<SelectionVerdict> {
    th.validate()?;
    let paths = sample_paths(policy, window, th.num_samples, seed)?;
    let [(l50, h50), (l90, h90)] = th.q_pairs;
    let (lo, hi) = quantile_bounds(&paths, l50, h50)?;
    let picp50 = picp(&window.target_y, &lo, &hi)?;
    let (lo, hi) = quantile_bounds(&paths, l90, h90)?;
    let picp90 = picp(&window.target_y, &lo, &hi)?;
    let se = window_spectral_entropy(window, th)?;
    Ok(verdict_from_stats(picp50, picp90, se, th))
}
