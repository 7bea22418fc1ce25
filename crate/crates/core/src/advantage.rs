//! Reward shaping and step-wise group advantages.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::reward::RewardTable;
use crate::series::EPS_STD;

/// Log-compression above a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ShapingConfig {
    pub tau: f64,
    pub alpha: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self { tau: 0.8, alpha: 0.01 }
    }
}

impl ShapingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(invalid!("tau must be finite"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid!("alpha must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `r` below `tau`, `tau + alpha * ln(r - tau + 1)` at or above it.
#[inline]
pub fn shape_reward(r: f64, cfg: &ShapingConfig) -> f64 {
    if r < cfg.tau {
        r
    } else {
        cfg.tau + cfg.alpha * libm::log1p(r - cfg.tau)
    }
}

/// Shapes every combined reward, ground-truth row included.
pub fn shape_table(table: &RewardTable, cfg: &ShapingConfig) -> RewardTable {
    let mut out = table.clone();
    for e in &mut out.entries {
        e.combined = shape_reward(e.combined, cfg);
    }
    out
}

/// Advantages indexed `[member][patch][variate]`, aligned with the table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdvantageTable {
    pub values: Vec<f64>,
    pub num_members: usize,
    pub num_patches: usize,
    pub num_variates: usize,
    pub eps_std: f64,
}

impl AdvantageTable {
    #[inline]
    pub fn get(&self, k: usize, t: usize, d: usize) -> f64 {
        self.values[(k * self.num_patches + t) * self.num_variates + d]
    }

    /// Per-step advantage of member `k`, averaged over variates.
    pub fn step_mean(&self, k: usize, t: usize) -> f64 {
        (0..self.num_variates).map(|d| self.get(k, t, d)).sum::<f64>() / self.num_variates as f64
    }

    pub fn mean_abs(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.values.len() as f64
    }
}

/// Reward-to-go advantages normalized by the statistics of the members'
/// sequence-average rewards, per variate.
///
/// For variate `d` with per-member averages `mu_n = mean_t r[n][t][d]`,
/// `A[k][t][d] = sum_{s >= t} (r[k][s][d] - mean(mu)) / max(std(mu), eps)`
/// with the population std over all `G + 1` members.
pub fn step_advantages(shaped: &RewardTable) -> AdvantageTable {
    let members = shaped.num_members();
    let np = shaped.layout.num_patches;
    let nd = shaped.num_variates;
    let mut values = vec![0.0; members * np * nd];
    for d in 0..nd {
        let averages: Vec<f64> = (0..members)
            .map(|k| (0..np).map(|t| shaped.combined(k, t, d)).sum::<f64>() / np as f64)
            .collect();
        let mean = averages.iter().sum::<f64>() / members as f64;
        let var = averages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / members as f64;
        let scale = libm::sqrt(var).max(EPS_STD);
        for k in 0..members {
            let mut to_go = 0.0;
            for t in (0..np).rev() {
                to_go += shaped.combined(k, t, d) - mean;
                values[(k * np + t) * nd + d] = to_go / scale;
            }
        }
    }
    // Identical rewards can leave rounding residue of order eps / EPS_STD.
    for d in 0..nd {
        let first = shaped.combined(0, 0, d);
        let identical = (0..members).all(|k| (0..np).all(|t| shaped.combined(k, t, d) == first));
        if identical {
            for k in 0..members {
                for t in 0..np {
                    values[(k * np + t) * nd + d] = 0.0;
                }
            }
        }
    }
    AdvantageTable { values, num_members: members, num_patches: np, num_variates: nd, eps_std: EPS_STD }
}
