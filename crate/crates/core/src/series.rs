//! Series containers, forecast windows, evaluation splits and per-window
//! normalization.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, shape, Error, Result};
use crate::matrix::Matrix;
use crate::rng::{rng_from_seed, standard_normal};

/// Floor applied to every standard deviation.
pub const EPS_STD: f64 = 1e-8;

/// A multivariate target series with optional covariates, all in raw units.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MultivariateSeries {
    pub values: Matrix,
    pub covariates: Matrix,
    pub name: String,
    pub sampling_rate: String,
}

impl MultivariateSeries {
    /// Validates row agreement and finiteness.
    pub fn new(values: Matrix, covariates: Matrix, name: impl Into<String>) -> Result<Self> {
        if values.rows() == 0 {
            return Err(Error::Empty("series has no rows".into()));
        }
        if values.cols() == 0 {
            return Err(Error::Empty("zero target columns".into()));
        }
        if covariates.rows() != values.rows() {
            return Err(shape!(
                "covariates have {} rows, targets have {}",
                covariates.rows(),
                values.rows()
            ));
        }
        for m in [&values, &covariates] {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    if !m.get(r, c).is_finite() {
                        return Err(Error::NonFinite { row: r, col: c });
                    }
                }
            }
        }
        Ok(Self { values, covariates, name: name.into(), sampling_rate: String::new() })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn num_targets(&self) -> usize {
        self.values.cols()
    }

    pub fn num_covariates(&self) -> usize {
        self.covariates.cols()
    }

    /// Window whose context starts at `origin`.
    pub fn window(&self, origin: usize, context_len: usize, horizon: usize) -> ForecastWindow {
        let split = origin + context_len;
        ForecastWindow {
            context_y: self.values.slice_rows(origin, split),
            context_x: self.covariates.slice_rows(origin, split),
            target_y: self.values.slice_rows(split, split + horizon),
            origin_index: origin,
        }
    }
}

/// One sample: `L` context rows followed immediately by `H` target rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForecastWindow {
    pub context_y: Matrix,
    pub context_x: Matrix,
    pub target_y: Matrix,
    pub origin_index: usize,
}

impl ForecastWindow {
    pub fn context_len(&self) -> usize {
        self.context_y.rows()
    }

    pub fn horizon(&self) -> usize {
        self.target_y.rows()
    }

    pub fn num_targets(&self) -> usize {
        self.target_y.cols()
    }

    pub fn num_covariates(&self) -> usize {
        self.context_x.cols()
    }

    /// Source rows covered by the target, `[start, end)`.
    pub fn target_range(&self) -> (usize, usize) {
        let start = self.origin_index + self.context_len();
        (start, start + self.horizon())
    }

    /// Context followed by target for channel `d` (`y_{1:L+H}`).
    pub fn full_channel(&self, d: usize) -> Vec<f64> {
        let mut out = self.context_y.column(d);
        out.extend(self.target_y.column(d));
        out
    }

    /// Keeps the first `horizon` target rows.
    pub fn truncate_horizon(&mut self, horizon: usize) {
        if horizon < self.horizon() {
            self.target_y = self.target_y.slice_rows(0, horizon);
        }
    }
}

/// Per-channel location and scale.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Column-wise mean and population std of `m`, std floored at [`EPS_STD`].
    pub fn from_columns(m: &Matrix) -> Self {
        let n = m.rows().max(1) as f64;
        let mut mean = Vec::with_capacity(m.cols());
        let mut std = Vec::with_capacity(m.cols());
        for c in 0..m.cols() {
            let mu = (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / n;
            let var = (0..m.rows()).map(|r| { let e = m.get(r, c) - mu; e * e }).sum::<f64>() / n;
            mean.push(mu);
            std.push(libm::sqrt(var).max(EPS_STD));
        }
        Self { mean, std }
    }

    pub fn identity(channels: usize) -> Self {
        Self { mean: alloc::vec![0.0; channels], std: alloc::vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Statistics of the target rows, used by the rewards.
pub fn target_norm_stats(window: &ForecastWindow) -> NormStats {
    NormStats::from_columns(&window.target_y)
}

/// Statistics of the context rows (targets, covariates), used as model input
/// scaling. Target statistics are unknown at inference time.
pub fn context_norm_stats(window: &ForecastWindow) -> (NormStats, NormStats) {
    (NormStats::from_columns(&window.context_y), NormStats::from_columns(&window.context_x))
}

pub fn normalize(seq: &Matrix, stats: &NormStats) -> Result<Matrix> {
    map_columns(seq, stats, |v, mu, sd| (v - mu) / sd)
}

pub fn denormalize(seq: &Matrix, stats: &NormStats) -> Result<Matrix> {
    map_columns(seq, stats, |v, mu, sd| v * sd + mu)
}

fn map_columns(seq: &Matrix, stats: &NormStats, f: impl Fn(f64, f64, f64) -> f64) -> Result<Matrix> {
    if seq.cols() != stats.channels() || stats.std.len() != stats.mean.len() {
        return Err(shape!("{} columns vs {} statistics", seq.cols(), stats.channels()));
    }
    let mut out = seq.clone();
    for r in 0..seq.rows() {
        for c in 0..seq.cols() {
            out.set(r, c, f(seq.get(r, c), stats.mean[c], stats.std[c]));
        }
    }
    Ok(out)
}

/// Horizon split into `num_patches` patches of `patch_len` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatchLayout {
    pub patch_len: usize,
    pub num_patches: usize,
}

impl PatchLayout {
    pub fn new(patch_len: usize, num_patches: usize) -> Result<Self> {
        if patch_len == 0 || num_patches == 0 {
            return Err(invalid!("patch_len and num_patches must be >= 1"));
        }
        Ok(Self { patch_len, num_patches })
    }

    /// Layout for a horizon that must be an exact multiple of `patch_len`.
    pub fn for_horizon(horizon: usize, patch_len: usize) -> Result<Self> {
        if patch_len == 0 || horizon == 0 || horizon % patch_len != 0 {
            return Err(invalid!("horizon {horizon} is not a positive multiple of patch length {patch_len}"));
        }
        Self::new(patch_len, horizon / patch_len)
    }

    /// Largest whole-patch horizon not exceeding `horizon`.
    pub fn aligned_horizon(horizon: usize, patch_len: usize) -> usize {
        if patch_len == 0 {
            0
        } else {
            (horizon / patch_len) * patch_len
        }
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.patch_len * self.num_patches
    }

    /// Row range of patch `t` (0-based) inside the horizon.
    #[inline]
    pub fn patch_rows(&self, t: usize) -> core::ops::Range<usize> {
        t * self.patch_len..(t + 1) * self.patch_len
    }
}

/// Training windows plus the held-out tail.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train_windows: Vec<ForecastWindow>,
    pub val_windows: Vec<ForecastWindow>,
    pub test_windows: Vec<ForecastWindow>,
}

/// Carves `W` test windows from the end of the series, `W` validation windows
/// before them, and stride-`stride` training windows whose targets end before
/// the validation region.
pub fn split_eval_windows_strided(
    series: &MultivariateSeries,
    num_eval: usize,
    horizon: usize,
    context_len: usize,
    stride: usize,
) -> Result<DatasetSplit> {
    if num_eval == 0 {
        return Err(invalid!("W must be ≥ 1"));
    }
    if horizon == 0 || context_len == 0 {
        return Err(invalid!("L and H must be ≥ 1"));
    }
    if stride == 0 {
        return Err(invalid!("stride must be ≥ 1"));
    }
    let t = series.len();
    let eval_span = 2 * num_eval * horizon;
    let required = eval_span + context_len + horizon;
    if t < required {
        return Err(Error::SeriesTooShort { required, available: t });
    }
    let val_start = t - eval_span;
    let test_start = t - num_eval * horizon;
    let eval_window = |target_start: usize| series.window(target_start - context_len, context_len, horizon);
    let val_windows = (0..num_eval).map(|i| eval_window(val_start + i * horizon)).collect();
    let test_windows = (0..num_eval).map(|i| eval_window(test_start + i * horizon)).collect();
    // Last origin whose target ends exactly at val_start.
    let last_origin = val_start - context_len - horizon;
    let train_windows = (0..=last_origin)
        .step_by(stride)
        .map(|o| series.window(o, context_len, horizon))
        .collect();
    Ok(DatasetSplit { train_windows, val_windows, test_windows })
}

/// [`split_eval_windows_strided`] with stride 1.
pub fn split_eval_windows(
    series: &MultivariateSeries,
    num_eval: usize,
    horizon: usize,
    context_len: usize,
) -> Result<DatasetSplit> {
    split_eval_windows_strided(series, num_eval, horizon, context_len, 1)
}

/// Keeps the latest `ceil(fraction * n)` training windows.
pub fn subsample_fraction(split: &DatasetSplit, fraction: f64) -> Result<DatasetSplit> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid!("fraction must lie in (0, 1], got {fraction}"));
    }
    let n = split.train_windows.len();
    // The slack keeps products like 0.7 * 10 = 7.000000000000001 from rounding up.
    let keep = (libm::ceil(fraction * n as f64 - 1e-9) as usize).clamp(usize::from(n > 0), n);
    Ok(DatasetSplit {
        train_windows: split.train_windows[n - keep..].to_vec(),
        val_windows: split.val_windows.clone(),
        test_windows: split.test_windows.clone(),
    })
}

/// Replaces a deterministic `fraction` of training windows with iid Gaussian
/// noise matched to each window's per-channel mean and std. Returns the split
/// and the origin indices that were salted.
pub fn salt_with_noise(split: &DatasetSplit, fraction: f64, seed: u64) -> Result<(DatasetSplit, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid!("noise fraction must lie in [0, 1], got {fraction}"));
    }
    let mut out = split.clone();
    let n = out.train_windows.len();
    let count = libm::round(fraction * n as f64) as usize;
    let mut rng = rng_from_seed(seed);
    // Partial Fisher-Yates to choose `count` distinct windows.
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..count.min(n) {
        let j = i + (rand::Rng::random_range(&mut rng, 0..(n - i)));
        order.swap(i, j);
    }
    let mut salted: Vec<usize> = order[..count.min(n)].to_vec();
    salted.sort_unstable();
    for &i in &salted {
        let w = &mut out.train_windows[i];
        let full = w.context_y.vstack(&w.target_y)?;
        let stats = NormStats::from_columns(&full);
        for m in [&mut w.context_y, &mut w.target_y] {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    let v = stats.mean[c] + stats.std[c] * standard_normal(&mut rng);
                    m.set(r, c, v);
                }
            }
        }
    }
    let origins = salted.iter().map(|&i| out.train_windows[i].origin_index).collect();
    Ok((out, origins))
}
