//! Random small policies and a finite-difference gradient checker, shared by
//! the gradient tests and the acceptance suite.

#![allow(dead_code)]

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timerft_core::policy::{init_policy, log_prob, log_prob_recorded, ComputationTape, EncodedContext, PolicyConfig, PolicyParams};
use timerft_core::series::ForecastWindow;
use timerft_core::trainer::{build_group, rft_loss, sft_loss, RewardSetup, RolloutGroup, TrainConfig};
use timerft_core::Matrix;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

pub fn random_config(rng: &mut ChaCha8Rng) -> PolicyConfig {
    let hidden = match rng.random_range(0..3) {
        0 => vec![],
        1 => vec![rng.random_range(2..5)],
        _ => vec![rng.random_range(2..4), rng.random_range(2..4)],
    };
    let patch_len = rng.random_range(1..3);
    let num_patches = rng.random_range(1..4);
    PolicyConfig {
        // At least four context rows so the context std is well away from its floor.
        context_multiplier: 4usize.div_ceil(patch_len * num_patches),
        hidden_widths: hidden,
        patch_len,
        num_patches,
        num_target_variates: rng.random_range(1..3),
        num_covariates: rng.random_range(0..2),
        ..PolicyConfig::default()
    }
}

/// Initializer plus a perturbation, so biases carry gradient while log-stds
/// stay near their initial value.
pub fn random_policy(rng: &mut ChaCha8Rng) -> PolicyParams {
    loop {
        let cfg = random_config(rng);
        if cfg.param_count() > 200 {
            continue;
        }
        let mut p = init_policy(&cfg, rng.random()).unwrap();
        for v in &mut p.values {
            *v += rng.random_range(-0.1..0.1);
        }
        return p;
    }
}

pub fn random_window(cfg: &PolicyConfig, rng: &mut ChaCha8Rng) -> ForecastWindow {
    let l = cfg.context_len();
    let h = cfg.horizon();
    let nd = cfg.num_target_variates;
    let mut m = |r: usize, c: usize| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    ForecastWindow { context_y: m(l, nd), context_x: m(l, cfg.num_covariates), target_y: m(h, nd), origin_index: 0 }
}

/// Outcome of comparing one or more analytic gradients with finite
/// differences.
#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub policies: usize,
    pub coordinates: usize,
    /// Coordinates outside both the relative tolerance and the absolute floor.
    pub violations: usize,
    /// Largest error as a fraction of the allowed error
    /// `max(ABS_FLOOR, REL_TOL * scale)`; at most 1 when every coordinate passes.
    pub worst_usage: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.worst_usage <= 1.0
    }

    fn merge(&mut self, other: FdReport) {
        self.coordinates += other.coordinates;
        self.violations += other.violations;
        self.worst_usage = self.worst_usage.max(other.worst_usage);
    }
}

pub fn fd_check(analytic: &[f64], params: &PolicyParams, f: impl Fn(&PolicyParams) -> f64) -> FdReport {
    let mut report = FdReport { policies: 1, ..FdReport::default() };
    let eval = |i: usize, h: f64| {
        let mut q = params.clone();
        q.values[i] += h;
        f(&q)
    };
    for (i, &a) in analytic.iter().enumerate() {
        // Fourth-order central stencil.
        let fd = (8.0 * (eval(i, STEP) - eval(i, -STEP)) - (eval(i, 2.0 * STEP) - eval(i, -2.0 * STEP))) / (12.0 * STEP);
        let err = (a - fd).abs();
        let scale = a.abs().max(fd.abs());
        let usage = err / ABS_FLOOR.max(REL_TOL * scale);
        report.coordinates += 1;
        if !(usage <= 1.0) {
            report.violations += 1;
        }
        report.worst_usage = report.worst_usage.max(usage);
    }
    report
}

pub fn log_prob_cases(seed: u64, n: usize) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = FdReport::default();
    for _ in 0..n {
        let params = random_policy(&mut rng);
        let cfg = params.config.clone();
        let w = random_window(&cfg, &mut rng);
        let ctx = EncodedContext::new(&w, &cfg).unwrap();
        let patches = ctx.target_patches(&w, cfg.layout()).unwrap();
        let weights: Vec<f64> = (0..cfg.num_patches).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = ComputationTape::new();
        log_prob_recorded(&params, &ctx, &patches, &mut tape).unwrap();
        let mut grad = vec![0.0; params.len()];
        tape.backward(&params, &weights, &mut grad);
        total.policies += 1;
        total.merge(fd_check(&grad, &params, |p| {
            log_prob(p, &ctx, &patches).unwrap().iter().zip(&weights).map(|(a, b)| a * b).sum()
        }));
    }
    total
}

pub fn sft_cases(seed: u64, n: usize) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = FdReport::default();
    for _ in 0..n {
        let params = random_policy(&mut rng);
        let batch: Vec<ForecastWindow> = (0..3).map(|_| random_window(&params.config, &mut rng)).collect();
        let obj = sft_loss(&params, &batch).unwrap();
        total.policies += 1;
        total.merge(fd_check(&obj.grad, &params, |p| sft_loss(p, &batch).unwrap().value));
    }
    total
}

pub fn groups_for(params: &PolicyParams, rng: &mut ChaCha8Rng, g: usize) -> Vec<RolloutGroup> {
    (0..2)
        .map(|_| {
            let w = random_window(&params.config, rng);
            build_group(params, &w, &RewardSetup::default(), g, rng.random()).unwrap().0
        })
        .collect()
}

/// Both loss paths (plain and ratio/clip), with a nearby reference policy,
/// a large KL weight and the ground-truth row alternately in and out of the
/// loss.
pub fn rft_cases(seed: u64, n: usize) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = FdReport::default();
    for case in 0..n {
        let params = random_policy(&mut rng);
        let mut reference = params.clone();
        for v in &mut reference.values {
            *v += rng.random_range(-1e-3..1e-3);
        }
        let cfg = TrainConfig { beta: 0.5, gt_in_loss: case % 2 == 0, ..TrainConfig::default() };
        let g = rng.random_range(1..4);
        let groups = groups_for(&params, &mut rng, g);
        total.policies += 1;
        for use_ratio in [false, true] {
            let obj = rft_loss(&params, &reference, &groups, &cfg, use_ratio).unwrap();
            total.merge(fd_check(&obj.grad, &params, |p| rft_loss(p, &reference, &groups, &cfg, use_ratio).unwrap().value));
        }
    }
    total
}
