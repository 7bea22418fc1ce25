//! Scalar transcriptions of the reward and advantage formulas, shared by the
//! oracle tests and the acceptance suite.

#![allow(dead_code)]

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timerft_core::advantage::{shape_reward, shape_table, step_advantages, ShapingConfig};
use timerft_core::reward::{build_reward_table, RewardWeights};
use timerft_core::series::{NormStats, PatchLayout};
use timerft_core::Matrix;

pub fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (1..=n / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re, im)
        })
        .collect()
}

/// Frequency reward written straight from the formula, with its own DFT.
pub fn freq_oracle(pred: &[f64], gt: &[f64]) -> f64 {
    let a = naive_dft(pred);
    let b = naive_dft(gt);
    let n = a.len();
    let z: f64 = (1..=n).map(|k| (k as f64).exp()).sum();
    let s: f64 = (0..n)
        .map(|k| {
            let w = ((k + 1) as f64).exp() / z;
            w * ((a[k].0 - b[k].0).powi(2) + (a[k].1 - b[k].1).powi(2))
        })
        .sum();
    (-s / n as f64).exp()
}

/// One entry of the table from the scalar formulas.
pub fn entry_oracle(pred: &[f64], gt: &[f64], full_pred: &[f64], full_gt: &[f64], w: &RewardWeights) -> [f64; 5] {
    let p = pred.len();
    let acc = (-(pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p as f64)).exp();
    let var = if p < 2 {
        1.0
    } else {
        let zp: f64 = pred.iter().map(|v| v.exp()).sum();
        let zg: f64 = gt.iter().map(|v| v.exp()).sum();
        let kl: f64 = pred.iter().zip(gt).map(|(a, b)| (a.exp() / zp) * ((a.exp() / zp) / (b.exp() / zg)).ln()).sum();
        (-kl).exp()
    };
    let freq = if full_pred.len() < 2 { 1.0 } else { freq_oracle(full_pred, full_gt) };
    let syn = acc * var + acc * freq;
    [acc, var, freq, syn, w.lambda_acc * acc + w.lambda_var * var + w.lambda_syn * syn]
}

/// Advantage for member `k`, step `t`, variate `d` from the sums as written.
pub fn advantage_oracle(r: &[Vec<Vec<f64>>], k: usize, t: usize, d: usize) -> f64 {
    let members = r.len();
    let np = r[0].len();
    let mu: Vec<f64> = (0..members).map(|n| (0..np).map(|j| r[n][j][d]).sum::<f64>() / np as f64).collect();
    let m = mu.iter().sum::<f64>() / members as f64;
    let s = (mu.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / members as f64).sqrt();
    (t..np).map(|j| r[k][j][d] - m).sum::<f64>() / s.max(1e-8)
}

/// Largest absolute deviation between `build_reward_table` and the scalar
/// oracle over `n` random instances (H <= 8, p <= 4, G <= 3). Ground-truth
/// rows must be exactly one; a violation is reported as infinity.
pub fn reward_table_max_error(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = RewardWeights::default();
    let mut worst = 0.0f64;
    for _ in 0..n {
        let p = rng.random_range(1..=4usize);
        let np = rng.random_range(1..=(8 / p).max(1));
        let h = p * np;
        let nd = rng.random_range(1..=2usize);
        let g = rng.random_range(1..=3usize);
        let layout = PatchLayout::new(p, np).unwrap();
        let mk = |rng: &mut ChaCha8Rng| Matrix::from_vec(h, nd, (0..h * nd).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let gt = mk(&mut rng);
        let group: Vec<Matrix> = (0..g).map(|_| mk(&mut rng)).collect();
        let stats = NormStats::from_columns(&gt);
        let table = build_reward_table(&group, &gt, layout, &stats, &weights).unwrap();
        for d in 0..nd {
            let norm = |m: &Matrix| -> Vec<f64> { (0..h).map(|i| (m.get(i, d) - stats.mean[d]) / stats.std[d]).collect() };
            let fg = norm(&gt);
            for (k, f) in group.iter().enumerate() {
                let fp = norm(f);
                for t in 0..np {
                    let r = t * p..(t + 1) * p;
                    let want = entry_oracle(&fp[r.clone()], &fg[r], &fp, &fg, &weights);
                    let e = table.get(k, t, d);
                    for (a, b) in [e.acc, e.var, e.freq, e.syn, e.combined].iter().zip(&want) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
            for t in 0..np {
                let e = table.get(g, t, d);
                if (e.acc, e.var, e.freq) != (1.0, 1.0, 1.0) {
                    worst = f64::INFINITY;
                }
            }
        }
    }
    worst
}

/// Largest relative deviation (denominator floored at 1) between
/// `step_advantages` and the brute-force sums over `n` random tables with
/// G <= 3, N_p <= 3.
pub fn advantage_max_error(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = RewardWeights::default();
    let shaping = ShapingConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..n {
        let g = rng.random_range(1..=3usize);
        let np = rng.random_range(1..=3usize);
        let nd = rng.random_range(1..=2usize);
        let p = 2;
        let h = p * np;
        let layout = PatchLayout::new(p, np).unwrap();
        let mk = |rng: &mut ChaCha8Rng| Matrix::from_vec(h, nd, (0..h * nd).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let gt = mk(&mut rng);
        let group: Vec<Matrix> = (0..g).map(|_| mk(&mut rng)).collect();
        let table = build_reward_table(&group, &gt, layout, &NormStats::from_columns(&gt), &weights).unwrap();
        let adv = step_advantages(&shape_table(&table, &shaping));
        let r: Vec<Vec<Vec<f64>>> = (0..=g)
            .map(|k| (0..np).map(|t| (0..nd).map(|d| shape_reward(table.combined(k, t, d), &shaping)).collect()).collect())
            .collect();
        for k in 0..=g {
            for t in 0..np {
                for d in 0..nd {
                    let want = advantage_oracle(&r, k, t, d);
                    worst = worst.max((adv.get(k, t, d) - want).abs() / want.abs().max(1.0));
                }
            }
        }
    }
    worst
}
