use proptest::prelude::*;

use timerft_core::advantage::{shape_reward, step_advantages, ShapingConfig};
use timerft_core::eval::{mae, mse};
use timerft_core::reward::{
    accuracy_reward, build_reward_table, frequency_reward, variability_reward, RewardTable, RewardWeights, StepRewardComponents,
};
use timerft_core::selection::{picp, quantile_bounds};
use timerft_core::series::{denormalize, normalize, subsample_fraction, DatasetSplit, NormStats, PatchLayout};
use timerft_core::spectral::{freq_weights, spectral_entropy, SE_SEGMENT_LEN};
use timerft_core::synth::{generate_synthetic, ShiftSpec, SynthSpec};
use timerft_core::trainer::kl_estimate;
use timerft_core::Matrix;

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn vec_pair(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| (prop::collection::vec(-4.0..4.0f64, n), prop::collection::vec(-4.0..4.0f64, n)))
}

/// A reward table filled with arbitrary combined values.
fn table_from(values: &[f64], g: usize, np: usize, nd: usize) -> RewardTable {
    let w = RewardWeights::default();
    let entries = values
        .iter()
        .map(|&c| {
            let mut e = StepRewardComponents::perfect(&w);
            e.combined = c;
            e
        })
        .collect();
    RewardTable { entries, layout: PatchLayout::new(1, np).unwrap(), group_size: g, num_variates: nd }
}

fn table_strategy() -> impl Strategy<Value = (Vec<f64>, usize, usize, usize)> {
    (1..5usize, 1..4usize, 1..3usize).prop_flat_map(|(g, np, nd)| {
        (prop::collection::vec(0.0..1.02f64, (g + 1) * np * nd), Just(g), Just(np), Just(nd))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalization_round_trips(m in (1..12usize, 1..4usize).prop_flat_map(|(r, c)| matrix(r, c, 1e3))) {
        let stats = NormStats::from_columns(&m);
        let back = denormalize(&normalize(&m, &stats).unwrap(), &stats).unwrap();
        for (a, b) in back.iter().zip(m.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn reward_components_in_range((pred, gt) in vec_pair(2..17)) {
        let acc = accuracy_reward(&pred, &gt).unwrap();
        let var = variability_reward(&pred, &gt).unwrap();
        let freq = frequency_reward(&pred, &gt).unwrap();
        for v in [acc, var, freq] {
            prop_assert!(v > 0.0 && v <= 1.0, "{v}");
        }
        let w = RewardWeights::default();
        let e = StepRewardComponents::new(acc, var, freq, &w);
        prop_assert!(e.syn > 0.0 && e.syn <= 2.0);
        prop_assert!(e.combined > 0.0 && e.combined <= w.max_combined());
    }

    #[test]
    fn characteristic_rewards_ignore_offsets((pred, gt) in vec_pair(2..17), c in -10.0..10.0f64) {
        let ps: Vec<f64> = pred.iter().map(|v| v + c).collect();
        let gs: Vec<f64> = gt.iter().map(|v| v + c).collect();
        prop_assert!((variability_reward(&ps, &gs).unwrap() - variability_reward(&pred, &gt).unwrap()).abs() < 1e-9);
        prop_assert!((frequency_reward(&ps, &gs).unwrap() - frequency_reward(&pred, &gt).unwrap()).abs() < 1e-9);
        prop_assert!((variability_reward(&ps, &gt).unwrap() - variability_reward(&pred, &gt).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn accuracy_falls_with_residual_scale((pred, gt) in vec_pair(1..9), s in 1.01..4.0f64) {
        prop_assume!(pred.iter().zip(&gt).any(|(a, b)| (a - b).abs() > 1e-3));
        let scaled: Vec<f64> = pred.iter().zip(&gt).map(|(a, b)| b + s * (a - b)).collect();
        prop_assert!(accuracy_reward(&scaled, &gt).unwrap() < accuracy_reward(&pred, &gt).unwrap());
    }

    #[test]
    fn ground_truth_row_dominates(
        (group, gt) in (1..4usize, 1..4usize, 1..3usize, 1..4usize).prop_flat_map(|(g, p, np, nd)| {
            (prop::collection::vec(matrix(p * np, nd, 3.0), g), matrix(p * np, nd, 3.0), Just((p, np)))
        }).prop_map(|(g, gt, layout)| ((g, layout), gt))
    ) {
        let (group, (p, np)) = group;
        let layout = PatchLayout::new(p, np).unwrap();
        let table = build_reward_table(&group, &gt, layout, &NormStats::from_columns(&gt), &RewardWeights::default()).unwrap();
        for t in 0..np {
            for d in 0..gt.cols() {
                let best = table.combined(group.len(), t, d);
                for k in 0..group.len() {
                    prop_assert!(best >= table.combined(k, t, d));
                }
            }
        }
    }

    #[test]
    fn freq_weights_normalized(n in 1..4097usize) {
        let w = freq_weights(n).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn shaping_is_monotone(a in -1.0..2.0f64, b in -1.0..2.0f64) {
        prop_assume!(a < b);
        let cfg = ShapingConfig::default();
        prop_assert!(shape_reward(a, &cfg) < shape_reward(b, &cfg));
    }

    #[test]
    fn advantages_sum_to_zero_at_first_step((values, g, np, nd) in table_strategy()) {
        let adv = step_advantages(&table_from(&values, g, np, nd));
        for d in 0..nd {
            let s: f64 = (0..=g).map(|k| adv.get(k, 0, d)).sum();
            prop_assert!(s.abs() <= 1e-9, "{s}");
        }
        prop_assert!(adv.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn advantages_shift_and_scale_invariant((values, g, np, nd) in table_strategy(), c in -5.0..5.0f64, s in 0.1..10.0f64) {
        let base = step_advantages(&table_from(&values, g, np, nd));
        let moved: Vec<f64> = values.iter().map(|v| s * v + c).collect();
        let other = step_advantages(&table_from(&moved, g, np, nd));
        for (a, b) in base.values.iter().zip(&other.values) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn picp_bounded_and_monotone(
        paths in prop::collection::vec(matrix(6, 1, 2.0), 3..20),
        gt in matrix(6, 1, 2.5),
        q in 0.05..0.45f64,
        widen in 0.0..0.04f64,
    ) {
        let (lo, hi) = quantile_bounds(&paths, q, 1.0 - q).unwrap();
        let narrow = picp(&gt, &lo, &hi).unwrap();
        let (lo, hi) = quantile_bounds(&paths, q - widen, 1.0 - q + widen).unwrap();
        let wide = picp(&gt, &lo, &hi).unwrap();
        prop_assert!((0.0..=1.0).contains(&narrow));
        prop_assert!(wide >= narrow);
    }

    #[test]
    fn spectral_entropy_bounded(x in prop::collection::vec(-5.0..5.0f64, 4..300)) {
        for seg in [0, SE_SEGMENT_LEN] {
            let se = spectral_entropy(&x, seg).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&se), "{se}");
        }
    }

    #[test]
    fn k3_is_non_negative(a in -50.0..50.0f64, b in -50.0..50.0f64) {
        prop_assert!(kl_estimate(a, b) >= 0.0);
        prop_assert_eq!(kl_estimate(a, a), 0.0);
    }

    #[test]
    fn mae_bounded_by_rmse(
        (a, b) in (1..10usize, 1..3usize).prop_flat_map(|(r, c)| (matrix(r, c, 10.0), matrix(r, c, 10.0)))
    ) {
        let m = mse(&a, &b).unwrap();
        let e = mae(&a, &b).unwrap();
        prop_assert!(m >= 0.0 && e >= 0.0);
        prop_assert!(e <= m.sqrt() * (1.0 + 1e-12));
        prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn raw_space_metrics_survive_normalization(
        (a, b) in (1..10usize, 1..3usize).prop_flat_map(|(r, c)| (matrix(r, c, 10.0), matrix(r, c, 10.0)))
    ) {
        let stats = NormStats::from_columns(&b);
        let back = denormalize(&normalize(&a, &stats).unwrap(), &stats).unwrap();
        prop_assert!((mse(&back, &b).unwrap() - mse(&a, &b).unwrap()).abs() <= 1e-9 * mse(&a, &b).unwrap().max(1.0));
    }

    #[test]
    fn few_shot_subsets_nest(f1 in 0.01..1.0f64, f2 in 0.01..1.0f64, n in 1..60usize) {
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let windows: Vec<_> = (0..n).map(|i| timerft_core::series::ForecastWindow {
            context_y: Matrix::zeros(1, 1),
            context_x: Matrix::zeros(1, 0),
            target_y: Matrix::zeros(1, 1),
            origin_index: i,
        }).collect();
        let split = DatasetSplit { train_windows: windows, val_windows: vec![], test_windows: vec![] };
        let small = subsample_fraction(&split, lo).unwrap();
        let big = subsample_fraction(&split, hi).unwrap();
        prop_assert!(small.train_windows.iter().all(|w| big.train_windows.contains(w)));
    }

    #[test]
    fn synthesis_is_deterministic(seed in any::<u64>(), noise in 0.0..1.0f64) {
        let spec = SynthSpec {
            num_channels: 2,
            length: 64,
            base_freqs: vec![1.0 / 16.0],
            amplitudes: vec![1.0],
            noise_std: noise,
            shift: ShiftSpec::none(),
        };
        prop_assert_eq!(generate_synthetic(&spec, seed).unwrap(), generate_synthetic(&spec, seed).unwrap());
    }
}
