use approx::assert_relative_eq;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timerft_core::policy::{
    init_policy, log_prob, point_forecast, sample_rollout, step_distribution, EncodedContext, PolicyConfig, PolicyParams,
};
use timerft_core::rng::derive_seed;
use timerft_core::selection::{select, Decision, SelectionThresholds};
use timerft_core::series::{split_eval_windows, ForecastWindow};
use timerft_core::synth::{generate_synthetic, ShiftSpec, SynthSpec};
use timerft_core::trainer::{train_rft, train_sft, RewardSetup, TrainConfig, TrainObserver, RftStepTrace};
use timerft_core::Matrix;

fn config(p: usize, np: usize, nd: usize) -> PolicyConfig {
    PolicyConfig { patch_len: p, num_patches: np, num_target_variates: nd, hidden_widths: vec![6], ..PolicyConfig::default() }
}

fn window(cfg: &PolicyConfig, seed: u64) -> ForecastWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = |r: usize, c: usize| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    ForecastWindow {
        context_y: m(cfg.context_len(), cfg.num_target_variates),
        context_x: m(cfg.context_len(), cfg.num_covariates),
        target_y: m(cfg.horizon(), cfg.num_target_variates),
        origin_index: 0,
    }
}

#[test]
fn log_prob_is_causal() {
    let cfg = config(2, 4, 2);
    let params = init_policy(&cfg, 3).unwrap();
    let w = window(&cfg, 1);
    let ctx = EncodedContext::new(&w, &cfg).unwrap();
    let base = ctx.target_patches(&w, cfg.layout()).unwrap();
    let lp = log_prob(&params, &ctx, &base).unwrap();
    for changed in 0..cfg.num_patches {
        let mut patches = base.clone();
        patches[changed].as_mut_slice()[0] += 0.7;
        let moved = log_prob(&params, &ctx, &patches).unwrap();
        for t in 0..cfg.num_patches {
            if t < changed {
                assert_eq!(moved[t], lp[t], "step {t} saw patch {changed}");
            } else {
                assert_ne!(moved[t], lp[t], "step {t} ignored patch {changed}");
            }
        }
    }
}

#[test]
fn rollout_log_probs_match_teacher_forcing() {
    let cfg = config(3, 3, 1);
    let params = init_policy(&cfg, 9).unwrap();
    let ctx = EncodedContext::new(&window(&cfg, 2), &cfg).unwrap();
    for s in 0..5 {
        let r = sample_rollout(&params, &ctx, s);
        assert_eq!(r, sample_rollout(&params, &ctx, s));
        for (a, b) in log_prob(&params, &ctx, &r.patches).unwrap().iter().zip(&r.step_log_probs) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn density_at_mode_and_unit_scale() {
    // No hidden layer and all-zero weights: mean 0, log-std 0 everywhere.
    let cfg = PolicyConfig { hidden_widths: vec![], ..config(1, 1, 1) };
    let params = PolicyParams::from_values(cfg.clone(), vec![0.0; cfg.param_count()]).unwrap();
    let ctx = EncodedContext::new(&window(&cfg, 0), &cfg).unwrap();
    let dist = step_distribution(&params, &ctx.features, &[], 0).unwrap();
    assert_relative_eq!(dist.log_prob(&dist.mean), -0.918_938_533_204_672_7, epsilon = 1e-14);
    let r = sample_rollout(&params, &ctx, 4);
    let z = r.patches[0].get(0, 0);
    assert_relative_eq!(r.step_log_probs[0], -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
}

#[test]
fn single_point_density_integrates_to_one() {
    let cfg = config(1, 1, 1);
    for seed in 0..5 {
        let params = init_policy(&cfg, seed).unwrap();
        let ctx = EncodedContext::new(&window(&cfg, seed), &cfg).unwrap();
        let dist = step_distribution(&params, &ctx.features, &[], 0).unwrap();
        let (m, s) = (dist.mean.get(0, 0), dist.log_std.get(0, 0).exp());
        // Composite Simpson over +-12 sigma.
        let n = 4000;
        let (a, b) = (m - 12.0 * s, m + 12.0 * s);
        let h = (b - a) / n as f64;
        let f = |x: f64| dist.log_prob(&Matrix::column_vector(&[x])).exp();
        let mut sum = f(a) + f(b);
        for i in 1..n {
            sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((sum * h / 3.0 - 1.0).abs() < 1e-4);
    }
}

#[test]
fn padding_slots_are_ignored() {
    let cfg = config(2, 3, 1);
    let params = init_policy(&cfg, 1).unwrap();
    let ctx = EncodedContext::new(&window(&cfg, 5), &cfg).unwrap();
    let junk = vec![Matrix::from_vec(2, 1, vec![9.0, -9.0]).unwrap(); 2];
    assert_eq!(
        step_distribution(&params, &ctx.features, &[], 0).unwrap(),
        step_distribution(&params, &ctx.features, &junk, 0).unwrap()
    );
}

#[test]
fn point_forecast_variance_halves_with_double_samples() {
    let cfg = config(2, 2, 1);
    let params = init_policy(&cfg, 2).unwrap();
    let w = window(&cfg, 3);
    let spread = |n: usize| {
        let xs: Vec<f64> = (0..400).map(|r| point_forecast(&params, &w, n, derive_seed(77, r)).unwrap().get(0, 0)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let ratio = spread(8) / spread(16);
    assert!((1.6..2.5).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn near_deterministic_policy_collapses_intervals() {
    let cfg = PolicyConfig { min_log_std: -30.0, max_log_std: -29.0, ..config(2, 2, 1) };
    let params = init_policy(&cfg, 1).unwrap();
    let w = window(&cfg, 8);
    let a = point_forecast(&params, &w, 1, 1).unwrap();
    let b = point_forecast(&params, &w, 1, 2).unwrap();
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() < 1e-9);
    }
}

fn sine_split(h: usize) -> timerft_core::series::DatasetSplit {
    let spec = SynthSpec {
        num_channels: 1,
        length: 400,
        base_freqs: vec![1.0 / 16.0, 1.0 / 8.0],
        amplitudes: vec![1.0, 0.5],
        noise_std: 0.0,
        shift: ShiftSpec::none(),
    };
    split_eval_windows(&generate_synthetic(&spec, 1).unwrap(), 2, h, 2 * h).unwrap()
}

#[test]
fn selection_is_deterministic_and_sound() {
    let cfg = config(4, 2, 1);
    let params = init_policy(&cfg, 0).unwrap();
    let split = sine_split(8);
    let th = SelectionThresholds { num_samples: 20, ..SelectionThresholds::default() };
    for w in split.train_windows.iter().step_by(50) {
        let v = select(w, &params, &th, 3).unwrap();
        assert_eq!(v, select(w, &params, &th, 3).unwrap());
        assert_eq!(v.decision == Decision::Dropped, v.reason != timerft_core::selection::DropReason::None);
        if v.decision == Decision::Kept {
            assert!(v.picp50 <= 0.7 && v.picp90 >= 0.7 && v.se <= 0.5);
        }
    }
}

#[derive(Default)]
struct Traces(Vec<RftStepTrace>);

impl TrainObserver for Traces {
    fn on_rft_step(&mut self, trace: &RftStepTrace) {
        self.0.push(trace.clone());
    }
}

#[test]
fn training_loops_keep_their_contracts() {
    let cfg = config(4, 2, 1);
    let params = init_policy(&cfg, 0).unwrap();
    let split = sine_split(8);
    let base = TrainConfig { batch_size: 4, group_size: 3, eval_every: 5, val_num_samples: 4, ..TrainConfig::default() };

    let none = train_sft(&params, &split, &TrainConfig { max_steps: 0, ..base.clone() }, &mut ()).unwrap();
    assert_eq!(none.final_params, params);
    assert!(none.records.is_empty());

    let sft = train_sft(&params, &split, &TrainConfig { max_steps: 20, ..base.clone() }, &mut ()).unwrap();
    assert_eq!(sft.records.len(), 20);
    assert!(sft.records[19].loss < sft.records[0].loss);
    assert_eq!(sft.records, train_sft(&params, &split, &TrainConfig { max_steps: 20, ..base.clone() }, &mut ()).unwrap().records);

    let mut traces = Traces::default();
    let rft_cfg = TrainConfig { max_steps: 6, ..base.clone() };
    let out = train_rft(&params, &params, &split, &rft_cfg, &RewardSetup::default(), &mut traces).unwrap();
    assert_eq!(out.records.len(), 6);
    assert_eq!(traces.0.len(), 6);
    assert!(traces.0.iter().all(|t| t.rollouts_per_window.iter().all(|&g| g == 3)));
    assert!(out.records.iter().all(|r| r.loss.is_finite() && r.mean_kl >= 0.0));
}

#[test]
fn strong_kl_anchor_limits_drift() {
    let cfg = config(4, 2, 1);
    let params = init_policy(&cfg, 0).unwrap();
    let split = sine_split(8);
    let run = |beta: f64| {
        let c = TrainConfig { beta, max_steps: 15, batch_size: 4, group_size: 3, eval_every: 0, val_num_samples: 2, learning_rate: 1e-2, ..TrainConfig::default() };
        train_rft(&params, &params, &split, &c, &RewardSetup::default(), &mut ()).unwrap().final_params.distance(&params)
    };
    assert!(run(1e3) < run(0.0));
}
