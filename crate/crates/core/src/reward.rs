//! Step-wise temporal rewards for a group of forecasts.
//!
//! Every reward is computed per patch `t` and target variate `d` in the space
//! normalized by the target window's own mean and std:
//!
//! - accuracy: `exp(-nMSE)` over the patch,
//! - variability: `exp(-KL(softmax(pred) || softmax(gt)))` over the patch,
//! - frequency: `exp(-(1/N) sum_k w_k |F(pred)_k - F(gt)_k|^2)` over the whole
//!   horizon, replicated across patches,
//! - synergy: `acc * var + acc * freq`,
//! - combined: `l_acc * acc + l_var * var + l_syn * syn`.
//!
//! A [`RewardTable`] stores the components for `G` sampled forecasts followed
//! by the ground-truth row, whose components are exactly 1.

use alloc::vec::Vec;

use crate::error::{invalid, shape, Result};
use crate::matrix::Matrix;
use crate::series::{normalize, NormStats, PatchLayout};
use crate::spectral::{dft_one_sided, freq_weights};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct RewardWeights {
    pub lambda_acc: f64,
    pub lambda_var: f64,
    pub lambda_syn: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { lambda_acc: 0.9, lambda_var: 0.1, lambda_syn: 0.01 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_acc, self.lambda_var, self.lambda_syn];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid!("reward weights must be finite and >= 0"));
        }
        Ok(())
    }

    /// Combined reward of a perfect forecast.
    pub fn max_combined(&self) -> f64 {
        self.lambda_acc + self.lambda_var + 2.0 * self.lambda_syn
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRewardComponents {
    pub acc: f64,
    pub var: f64,
    pub freq: f64,
    pub syn: f64,
    pub combined: f64,
}

impl StepRewardComponents {
    pub fn new(acc: f64, var: f64, freq: f64, weights: &RewardWeights) -> Self {
        let syn = synergy_reward(acc, var, freq);
        Self { acc, var, freq, syn, combined: combined_reward(acc, var, syn, weights) }
    }

    /// Components of the ground truth scored against itself.
    pub fn perfect(weights: &RewardWeights) -> Self {
        Self::new(1.0, 1.0, 1.0, weights)
    }
}

pub fn accuracy_reward(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt, 1)?;
    let mse = pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    Ok(libm::exp(-mse))
}

fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(x.iter().map(|v| libm::exp(v - max)).sum::<f64>());
    x.iter().map(|v| v - lse).collect()
}

pub fn variability_reward(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt, 2)?;
    let lp = log_softmax(pred);
    let lq = log_softmax(gt);
    let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| libm::exp(*a) * (a - b)).sum();
    // KL is non-negative; tiny negative values are rounding.
    Ok(libm::exp(-kl.max(0.0)))
}

pub fn frequency_reward(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt, 2)?;
    let fp = dft_one_sided(pred)?;
    let fg = dft_one_sided(gt)?;
    let weights = freq_weights(fp.num_bins())?;
    let weighted: f64 = fp
        .bins
        .iter()
        .zip(&fg.bins)
        .zip(&weights)
        .map(|((a, b), w)| w * (a - b).norm_sqr())
        .sum();
    Ok(libm::exp(-weighted / fp.num_bins() as f64))
}

#[inline]
pub fn synergy_reward(acc: f64, var: f64, freq: f64) -> f64 {
    acc * var + acc * freq
}

#[inline]
pub fn combined_reward(acc: f64, var: f64, syn: f64, weights: &RewardWeights) -> f64 {
    weights.lambda_acc * acc + weights.lambda_var * var + weights.lambda_syn * syn
}

fn check_pair(pred: &[f64], gt: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(shape!("prediction has {} points, ground truth {}", pred.len(), gt.len()));
    }
    if pred.len() < min_len {
        return Err(invalid!("need at least {min_len} points, got {}", pred.len()));
    }
    Ok(())
}

/// Rewards indexed `[member][patch][variate]`; member `G` is the ground truth.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardTable {
    pub entries: Vec<StepRewardComponents>,
    pub layout: PatchLayout,
    pub group_size: usize,
    pub num_variates: usize,
}

impl RewardTable {
    #[inline]
    pub fn num_members(&self) -> usize {
        self.group_size + 1
    }

    #[inline]
    pub fn gt_member(&self) -> usize {
        self.group_size
    }

    #[inline]
    fn index(&self, k: usize, t: usize, d: usize) -> usize {
        (k * self.layout.num_patches + t) * self.num_variates + d
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize, d: usize) -> &StepRewardComponents {
        &self.entries[self.index(k, t, d)]
    }

    #[inline]
    pub fn combined(&self, k: usize, t: usize, d: usize) -> f64 {
        self.get(k, t, d).combined
    }

    #[inline]
    pub fn set_combined(&mut self, k: usize, t: usize, d: usize, value: f64) {
        let i = self.index(k, t, d);
        self.entries[i].combined = value;
    }

    /// Mean combined reward over the sampled members (ground truth excluded).
    pub fn mean_sampled_combined(&self) -> f64 {
        let n = self.group_size * self.layout.num_patches * self.num_variates;
        if n == 0 {
            return 0.0;
        }
        self.entries[..n].iter().map(|e| e.combined).sum::<f64>() / n as f64
    }
}

/// Scores `G` raw forecasts against the raw ground truth.
pub fn build_reward_table(
    group: &[Matrix],
    gt: &Matrix,
    layout: PatchLayout,
    stats: &NormStats,
    weights: &RewardWeights,
) -> Result<RewardTable> {
    let horizon = layout.horizon();
    let nd = gt.cols();
    gt.ensure_shape(horizon, nd, "ground truth")?;
    if stats.channels() != nd {
        return Err(shape!("{} normalization channels for {nd} variates", stats.channels()));
    }
    let gt_norm = normalize(gt, stats)?;
    let gt_cols: Vec<Vec<f64>> = (0..nd).map(|d| gt_norm.column(d)).collect();
    let np = layout.num_patches;
    let mut entries = Vec::with_capacity((group.len() + 1) * np * nd);
    for (k, forecast) in group.iter().enumerate() {
        forecast.ensure_shape(horizon, nd, &alloc::format!("forecast {k}"))?;
        let norm = normalize(forecast, stats)?;
        let cols: Vec<Vec<f64>> = (0..nd).map(|d| norm.column(d)).collect();
        let freq: Vec<f64> = (0..nd)
            .map(|d| sequence_frequency_reward(&cols[d], &gt_cols[d]))
            .collect::<Result<_>>()?;
        for t in 0..np {
            let rows = layout.patch_rows(t);
            for d in 0..nd {
                let p = &cols[d][rows.clone()];
                let g = &gt_cols[d][rows.clone()];
                let acc = accuracy_reward(p, g)?;
                let var = patch_variability_reward(p, g)?;
                entries.push(StepRewardComponents::new(acc, var, freq[d], weights));
            }
        }
    }
    let perfect = StepRewardComponents::perfect(weights);
    entries.extend(core::iter::repeat(perfect).take(np * nd));
    Ok(RewardTable { entries, layout, group_size: group.len(), num_variates: nd })
}

// Single-point patches and single-point horizons carry no variability or
// spectral content; those components are 1 (no discrepancy).
fn patch_variability_reward(p: &[f64], g: &[f64]) -> Result<f64> {
    if p.len() < 2 {
        return Ok(1.0);
    }
    variability_reward(p, g)
}

fn sequence_frequency_reward(p: &[f64], g: &[f64]) -> Result<f64> {
    if p.len() < 2 {
        return Ok(1.0);
    }
    frequency_reward(p, g)
}
