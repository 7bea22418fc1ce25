//! Supervised and reinforcement finetuning of the policy.
//!
//! The supervised loss is the teacher-forced negative log-likelihood of the
//! ground-truth patches. The reinforcement loss is a GRPO-style surrogate over
//! a group of on-policy rollouts (optionally extended with the ground truth)
//! weighted by step-wise advantages, plus a per-step `x - ln x - 1` KL penalty
//! against a frozen reference policy. Both are minimized with Adam and
//! decoupled weight decay.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::advantage::{shape_table, step_advantages, AdvantageTable, ShapingConfig};
use crate::error::{invalid, shape, Error, Result};
use crate::eval::evaluate;
use crate::matrix::Matrix;
use crate::policy::{log_prob, log_prob_recorded, sample_rollout, ComputationTape, EncodedContext, PolicyParams, Rollout};
use crate::reward::{build_reward_table, RewardTable, RewardWeights};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::series::{target_norm_stats, DatasetSplit, ForecastWindow};

/// Bound on `ln(f_ref / f_theta)` before exponentiation.
pub const KL_LOG_RATIO_CLAMP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    /// KL penalty coefficient.
    pub beta: f64,
    #[cfg_attr(feature = "serde", serde(alias = "G"))]
    pub group_size: usize,
    pub eps_clip: f64,
    /// Whether the ground-truth trajectory gets a policy-gradient term.
    pub gt_in_loss: bool,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Validation interval in steps; 0 validates only before and after.
    pub eval_every: usize,
    pub seed: u64,
    /// Rollouts per window for the validation point forecasts.
    pub val_num_samples: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    /// Optimizer updates per batch of rollouts. Above 1 the stored rollout
    /// log-probs act as `f_old` and the ratio/clip surrogate is used.
    pub ppo_epochs: usize,
    /// Fill `TrainRecord::wall_time_ms`. Off by default so record streams are
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.001,
            group_size: 8,
            eps_clip: 0.2,
            gt_in_loss: true,
            learning_rate: 1e-3,
            weight_decay: 0.1,
            batch_size: 128,
            max_steps: 500,
            eval_every: 50,
            seed: 0,
            val_num_samples: 100,
            grad_clip: 10.0,
            ppo_epochs: 1,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid!("beta must be finite and >= 0"));
        }
        if self.group_size == 0 {
            return Err(invalid!("group size must be >= 1"));
        }
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return Err(invalid!("eps_clip must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!("learning_rate must be finite and > 0"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid!("weight_decay must be finite and >= 0"));
        }
        if self.batch_size == 0 || self.val_num_samples == 0 || self.ppo_epochs == 0 {
            return Err(invalid!("batch_size, val_num_samples and ppo_epochs must be >= 1"));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(invalid!("grad_clip must be >= 0"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }
}

/// A scalar loss and its gradient with respect to every policy parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Mean per-step KL estimate (0 for the supervised loss).
    pub mean_kl: f64,
}

/// Teacher-forced NLL of the ground truth, averaged over patches and windows.
pub fn sft_loss(params: &PolicyParams, batch: &[ForecastWindow]) -> Result<Objective> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let cfg = &params.config;
    let np = cfg.num_patches as f64;
    let scale = 1.0 / (np * batch.len() as f64);
    let mut grad = vec![0.0; params.len()];
    let mut value = 0.0;
    for w in batch {
        let ctx = EncodedContext::new(w, cfg)?;
        let patches = ctx.target_patches(w, cfg.layout())?;
        let mut tape = ComputationTape::new();
        let lp = log_prob_recorded(params, &ctx, &patches, &mut tape)?;
        value -= lp.iter().sum::<f64>() * scale;
        tape.backward(params, &vec![-scale; lp.len()], &mut grad);
    }
    Ok(Objective { value, grad, mean_kl: 0.0 })
}

/// `x - ln x - 1` with `x = f_ref / f_theta`.
#[inline]
pub fn kl_estimate(logp_theta: f64, logp_ref: f64) -> f64 {
    let u = (logp_ref - logp_theta).clamp(-KL_LOG_RATIO_CLAMP, KL_LOG_RATIO_CLAMP);
    // exp_m1(u) - u keeps precision for small u.
    (libm::expm1(u) - u).max(0.0)
}

/// Derivative of [`kl_estimate`] with respect to `logp_theta`.
#[inline]
pub fn kl_estimate_grad(logp_theta: f64, logp_ref: f64) -> f64 {
    let u = logp_ref - logp_theta;
    if u.abs() >= KL_LOG_RATIO_CLAMP {
        return 0.0;
    }
    -libm::expm1(u)
}

/// Rollouts and advantages for one window, frozen for the update.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub context: EncodedContext,
    pub rollouts: Vec<Rollout>,
    /// Ground truth in the policy's normalized space.
    pub gt_patches: Vec<Matrix>,
    /// `G + 1` members, ground truth last.
    pub advantages: AdvantageTable,
    /// Log-probs of the ground truth under the sampling policy (used only by
    /// the ratio/clip surrogate).
    pub gt_old_log_probs: Vec<f64>,
}

impl RolloutGroup {
    fn members(&self, gt_in_loss: bool) -> impl Iterator<Item = (&[Matrix], &[f64])> {
        let sampled = self.rollouts.iter().map(|r| (r.patches.as_slice(), r.step_log_probs.as_slice()));
        let gt = gt_in_loss.then(|| (self.gt_patches.as_slice(), self.gt_old_log_probs.as_slice()));
        sampled.chain(gt)
    }
}

/// GRPO surrogate loss (minimized) over `groups`.
///
/// With `use_ratio == false` the sampling policy is the current one, the
/// importance ratio is identically 1 and each step contributes
/// `logp * A` with `A` the variate-averaged advantage held constant. With
/// `use_ratio == true` the stored log-probs act as `f_old` and the clipped
/// ratio objective applies.
pub fn rft_loss(params: &PolicyParams, ref_params: &PolicyParams, groups: &[RolloutGroup], cfg: &TrainConfig, use_ratio: bool) -> Result<Objective> {
    if groups.is_empty() {
        return Err(Error::Empty("no rollout groups".into()));
    }
    if params.config != ref_params.config {
        return Err(shape!("policy and reference architectures differ"));
    }
    let np = params.config.num_patches;
    let mut grad = vec![0.0; params.len()];
    let mut value = 0.0;
    let mut kl_sum = 0.0;
    let mut kl_count = 0usize;
    for group in groups {
        let members = group.rollouts.len() + usize::from(cfg.gt_in_loss);
        if group.advantages.num_members != group.rollouts.len() + 1 || group.advantages.num_patches != np {
            return Err(shape!("advantage table does not match the rollout group"));
        }
        let scale = 1.0 / (members as f64 * np as f64 * groups.len() as f64);
        for (slot, (patches, old_lp)) in group.members(cfg.gt_in_loss).enumerate() {
            // The ground truth is always the last advantage row.
            let k = if slot < group.rollouts.len() { slot } else { group.rollouts.len() };
            let mut tape = ComputationTape::new();
            let lp = log_prob_recorded(params, &group.context, patches, &mut tape)?;
            let lp_ref = log_prob(ref_params, &group.context, patches)?;
            let mut upstream = vec![0.0; np];
            for t in 0..np {
                let adv = group.advantages.step_mean(k, t);
                let (surrogate, d_surrogate) = if use_ratio {
                    clipped_surrogate(lp[t] - old_lp[t], adv, cfg.eps_clip)
                } else {
                    (lp[t] * adv, adv)
                };
                let kl = kl_estimate(lp[t], lp_ref[t]);
                kl_sum += kl;
                kl_count += 1;
                value -= scale * (surrogate - cfg.beta * kl);
                upstream[t] = -scale * (d_surrogate - cfg.beta * kl_estimate_grad(lp[t], lp_ref[t]));
            }
            tape.backward(params, &upstream, &mut grad);
        }
    }
    Ok(Objective { value, grad, mean_kl: kl_sum / kl_count.max(1) as f64 })
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)` with `r = exp(log_ratio)`, and its
/// derivative with respect to the current log-prob.
fn clipped_surrogate(log_ratio: f64, adv: f64, eps: f64) -> (f64, f64) {
    let ratio = libm::exp(log_ratio.clamp(-KL_LOG_RATIO_CLAMP, KL_LOG_RATIO_CLAMP));
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        Self { first_moment: vec![0.0; num_params], second_moment: vec![0.0; num_params], step: 0 }
    }
}

/// One Adam update with bias correction and decoupled weight decay:
///
/// ```text
/// m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
/// theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps) + lr * wd * theta
/// ```
///
/// A non-finite gradient leaves parameters and state untouched and returns
/// `false`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, hp: &AdamConfig) -> Result<bool> {
    if params.len() != grads.len() || state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(shape!("parameter, gradient and moment lengths differ"));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Ok(false);
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(hp.beta1, t);
    let bc2 = 1.0 - libm::pow(hp.beta2, t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        let decay = hp.learning_rate * hp.weight_decay * params[i];
        params[i] -= hp.learning_rate * m_hat / (libm::sqrt(v_hat) + hp.eps) + decay;
    }
    Ok(true)
}

/// Rescales `grad` to `max_norm` when its norm exceeds it. Returns the norm
/// before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = libm::sqrt(grad.iter().map(|g| g * g).sum());
    if max_norm > 0.0 && norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub mean_combined_reward: f64,
    pub mean_kl: f64,
    pub mean_advantage_abs: f64,
    pub grad_norm: f64,
    pub wall_time_ms: u64,
}

/// What one RFT step consumed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RftStepTrace {
    pub step: usize,
    pub origin_indices: Vec<usize>,
    pub rollouts_per_window: Vec<usize>,
}

/// Hooks into the training loops. Every method has a no-op default.
pub trait TrainObserver {
    /// Called once per step before the record is stored.
    fn on_record(&mut self, _record: &mut TrainRecord) {}
    fn on_rft_step(&mut self, _trace: &RftStepTrace) {}
    fn on_validation(&mut self, _step: usize, _val_mse: f64) {}
    /// A non-finite gradient made the optimizer skip `step`.
    fn on_skipped_step(&mut self, _step: usize) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation MSE (the final ones when there
    /// is no validation set).
    pub best_params: PolicyParams,
    pub final_params: PolicyParams,
    pub records: Vec<TrainRecord>,
    pub best_step: usize,
    pub best_val_mse: Option<f64>,
    pub val_history: Vec<(usize, f64)>,
}

/// Cycles through training windows in reshuffled epochs.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: Rng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self { order: (0..n).collect(), cursor: n, rng: rng_from_seed(seed) };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

struct Validator<'a> {
    windows: &'a [ForecastWindow],
    num_samples: usize,
    seed: u64,
    best: Option<(f64, usize, PolicyParams)>,
    history: Vec<(usize, f64)>,
}

impl<'a> Validator<'a> {
    fn observe(&mut self, step: usize, params: &PolicyParams, observer: &mut dyn TrainObserver) -> Result<()> {
        if self.windows.is_empty() {
            return Ok(());
        }
        let mse = evaluate(params, self.windows, self.num_samples, self.seed)?.aggregate_mse;
        observer.on_validation(step, mse);
        self.history.push((step, mse));
        if self.best.as_ref().map_or(true, |(b, _, _)| mse < *b) {
            self.best = Some((mse, step, params.clone()));
        }
        Ok(())
    }

    fn finish(self, final_params: PolicyParams, records: Vec<TrainRecord>) -> TrainOutcome {
        let (best_params, best_step, best_val_mse) = match self.best {
            Some((mse, step, p)) => (p, step, Some(mse)),
            None => (final_params.clone(), records.len(), None),
        };
        TrainOutcome { best_params, final_params, records, best_step, best_val_mse, val_history: self.history }
    }
}

fn due(step: usize, every: usize, max_steps: usize) -> bool {
    step == max_steps || (every > 0 && step % every == 0)
}

fn validation_seed(cfg: &TrainConfig) -> u64 {
    derive_seed(cfg.seed, 0x7661_6c69)
}

/// Minibatch supervised finetuning for `cfg.max_steps` steps.
pub fn train_sft(params: &PolicyParams, split: &DatasetSplit, cfg: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    cfg.validate()?;
    if split.train_windows.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    let mut current = params.clone();
    let mut state = OptimizerState::new(current.len());
    let adam = cfg.adam();
    let mut sampler = BatchSampler::new(split.train_windows.len(), derive_seed(cfg.seed, 1));
    let mut validator = Validator { windows: &split.val_windows, num_samples: cfg.val_num_samples, seed: validation_seed(cfg), best: None, history: Vec::new() };
    let mut records = Vec::with_capacity(cfg.max_steps);
    validator.observe(0, &current, observer)?;
    for step in 0..cfg.max_steps {
        let batch: Vec<ForecastWindow> = sampler.next_batch(cfg.batch_size).into_iter().map(|i| split.train_windows[i].clone()).collect();
        let mut obj = sft_loss(&current, &batch)?;
        let grad_norm = clip_grad_norm(&mut obj.grad, cfg.grad_clip);
        if !adam_step(&mut current.values, &obj.grad, &mut state, &adam)? {
            observer.on_skipped_step(step);
        }
        let mut record = TrainRecord {
            step,
            loss: obj.value,
            mean_combined_reward: 0.0,
            mean_kl: 0.0,
            mean_advantage_abs: 0.0,
            grad_norm,
            wall_time_ms: 0,
        };
        observer.on_record(&mut record);
        records.push(record);
        if due(step + 1, cfg.eval_every, cfg.max_steps) {
            validator.observe(step + 1, &current, observer)?;
        }
    }
    Ok(validator.finish(current, records))
}

/// Reward settings of one RFT run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardSetup {
    pub weights: RewardWeights,
    pub shaping: ShapingConfig,
}

/// Samples `group_size` rollouts for `window` and scores them.
pub fn build_group(params: &PolicyParams, window: &ForecastWindow, reward: &RewardSetup, group_size: usize, seed: u64) -> Result<(RolloutGroup, RewardTable)> {
    let cfg = &params.config;
    let layout = cfg.layout();
    let context = EncodedContext::new(window, cfg)?;
    let rollouts: Vec<Rollout> = (0..group_size).map(|k| sample_rollout(params, &context, derive_seed(seed, k as u64))).collect();
    let forecasts = rollouts.iter().map(|r| context.to_raw(&r.patches)).collect::<Result<Vec<_>>>()?;
    let table = build_reward_table(&forecasts, &window.target_y, layout, &target_norm_stats(window), &reward.weights)?;
    let advantages = step_advantages(&shape_table(&table, &reward.shaping));
    let gt_patches = context.target_patches(window, layout)?;
    let gt_old_log_probs = log_prob(params, &context, &gt_patches)?;
    Ok((RolloutGroup { context, rollouts, gt_patches, advantages, gt_old_log_probs }, table))
}

/// GRPO-style finetuning against the frozen `ref_params`.
///
/// Each step samples a minibatch of windows, draws `group_size` rollouts per
/// window from the current policy, scores them together with the ground
/// truth, shapes the rewards, computes step-wise advantages and applies
/// `ppo_epochs` Adam updates of [`rft_loss`].
pub fn train_rft(
    params: &PolicyParams,
    ref_params: &PolicyParams,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    reward: &RewardSetup,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    reward.weights.validate()?;
    reward.shaping.validate()?;
    if split.train_windows.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    let mut current = params.clone();
    let mut state = OptimizerState::new(current.len());
    let adam = cfg.adam();
    let use_ratio = cfg.ppo_epochs > 1;
    let mut sampler = BatchSampler::new(split.train_windows.len(), derive_seed(cfg.seed, 1));
    let mut validator = Validator { windows: &split.val_windows, num_samples: cfg.val_num_samples, seed: validation_seed(cfg), best: None, history: Vec::new() };
    let mut records = Vec::with_capacity(cfg.max_steps);
    validator.observe(0, &current, observer)?;
    for step in 0..cfg.max_steps {
        let batch = sampler.next_batch(cfg.batch_size);
        let step_seed = derive_seed(derive_seed(cfg.seed, 2), step as u64);
        let mut groups = Vec::with_capacity(batch.len());
        let mut reward_sum = 0.0;
        let mut adv_sum = 0.0;
        for (b, &i) in batch.iter().enumerate() {
            let (group, table) = build_group(&current, &split.train_windows[i], reward, cfg.group_size, derive_seed(step_seed, b as u64))?;
            reward_sum += table.mean_sampled_combined();
            adv_sum += group.advantages.mean_abs();
            groups.push(group);
        }
        observer.on_rft_step(&RftStepTrace {
            step,
            origin_indices: batch.iter().map(|&i| split.train_windows[i].origin_index).collect(),
            rollouts_per_window: groups.iter().map(|g| g.rollouts.len()).collect(),
        });
        let mut first: Option<(f64, f64, f64)> = None;
        for _ in 0..cfg.ppo_epochs {
            let mut obj = rft_loss(&current, ref_params, &groups, cfg, use_ratio)?;
            let grad_norm = clip_grad_norm(&mut obj.grad, cfg.grad_clip);
            first.get_or_insert((obj.value, obj.mean_kl, grad_norm));
            if !adam_step(&mut current.values, &obj.grad, &mut state, &adam)? {
                observer.on_skipped_step(step);
            }
        }
        let (loss, mean_kl, grad_norm) = first.expect("ppo_epochs >= 1");
        let n = groups.len() as f64;
        let mut record = TrainRecord {
            step,
            loss,
            mean_combined_reward: reward_sum / n,
            mean_kl,
            mean_advantage_abs: adv_sum / n,
            grad_norm,
            wall_time_ms: 0,
        };
        observer.on_record(&mut record);
        records.push(record);
        if due(step + 1, cfg.eval_every, cfg.max_steps) {
            validator.observe(step + 1, &current, observer)?;
        }
    }
    Ok(validator.finish(current, records))
}
