//! Autoregressive patch-Gaussian forecasting policy.
//!
//! The policy decodes the horizon one patch at a time. At step `t` a
//! feed-forward network reads
//!
//! 1. the context window (targets then covariates, each flattened row-major
//!    and normalized by the context's own per-channel statistics),
//! 2. the patches decoded so far, zero-padded to `N_p - 1` slots,
//! 3. a one-hot encoding of `t`,
//!
//! and emits a mean and a clamped log-std for every point of patch `t`. All
//! patches live in the context-normalized space; point forecasts are mapped
//! back to raw units with the same statistics.

mod tape;

use alloc::vec;
use alloc::vec::Vec;

pub use tape::ComputationTape;
use tape::TapeOp;

use crate::error::{invalid, shape, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed, standard_normal};
use crate::series::{context_norm_stats, denormalize, normalize, ForecastWindow, NormStats, PatchLayout};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PolicyConfig {
    /// Context length is `context_multiplier * horizon`.
    pub context_multiplier: usize,
    pub hidden_widths: Vec<usize>,
    pub patch_len: usize,
    pub num_patches: usize,
    pub num_target_variates: usize,
    pub num_covariates: usize,
    pub min_log_std: f64,
    pub max_log_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            context_multiplier: 2,
            hidden_widths: vec![32],
            patch_len: 8,
            num_patches: 4,
            num_target_variates: 1,
            num_covariates: 0,
            min_log_std: -7.0,
            max_log_std: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    /// Start of the `outputs x inputs` weight block; the bias follows it.
    pub offset: usize,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context_multiplier == 0 {
            return Err(invalid!("context_multiplier must be >= 1"));
        }
        if self.hidden_widths.iter().any(|&h| h == 0) {
            return Err(invalid!("hidden widths must be >= 1"));
        }
        if self.patch_len == 0 || self.num_patches == 0 || self.num_target_variates == 0 {
            return Err(invalid!("patch_len, num_patches and num_target_variates must be >= 1"));
        }
        if !(self.min_log_std < self.max_log_std) || !self.min_log_std.is_finite() || !self.max_log_std.is_finite() {
            return Err(invalid!("need finite min_log_std < max_log_std"));
        }
        Ok(())
    }

    pub fn layout(&self) -> PatchLayout {
        PatchLayout { patch_len: self.patch_len, num_patches: self.num_patches }
    }

    pub fn horizon(&self) -> usize {
        self.patch_len * self.num_patches
    }

    pub fn context_len(&self) -> usize {
        self.context_multiplier * self.horizon()
    }

    pub fn context_feature_dim(&self) -> usize {
        self.context_len() * (self.num_target_variates + self.num_covariates)
    }

    fn patch_dim(&self) -> usize {
        self.patch_len * self.num_target_variates
    }

    pub fn input_dim(&self) -> usize {
        self.context_feature_dim() + (self.num_patches - 1) * self.patch_dim() + self.num_patches
    }

    pub fn output_dim(&self) -> usize {
        2 * self.patch_dim()
    }

    pub(crate) fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut dims = vec![self.input_dim()];
        dims.extend(&self.hidden_widths);
        dims.push(self.output_dim());
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let s = LayerShape { inputs: w[0], outputs: w[1], offset };
                offset += w[0] * w[1] + w[1];
                s
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|s| s.inputs * s.outputs + s.outputs).sum()
    }
}

/// Flat parameter vector plus the architecture it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub values: Vec<f64>,
}

impl PolicyParams {
    pub fn from_values(config: PolicyConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if values.len() != config.param_count() {
            return Err(shape!("{} parameters for an architecture with {}", values.len(), config.param_count()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("parameters must be finite"));
        }
        Ok(Self { config, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn layer_shapes(&self) -> Vec<LayerShape> {
        self.config.layer_shapes()
    }

    /// Euclidean distance between two parameter vectors of the same shape.
    pub fn distance(&self, other: &PolicyParams) -> f64 {
        libm::sqrt(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum())
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases, and the
/// log-std half of the output bias set to -1.
pub fn init_policy(config: &PolicyConfig, seed: u64) -> Result<PolicyParams> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut values = vec![0.0; config.param_count()];
    let shapes = config.layer_shapes();
    for s in &shapes {
        let bound = 1.0 / libm::sqrt(s.inputs as f64);
        for w in &mut values[s.offset..s.offset + s.inputs * s.outputs] {
            *w = rand::Rng::random_range(&mut rng, -bound..bound);
        }
    }
    let last = shapes.last().expect("at least one layer");
    let bias = last.offset + last.inputs * last.outputs;
    let half = config.patch_dim();
    for b in &mut values[bias + half..bias + 2 * half] {
        *b = -1.0;
    }
    Ok(PolicyParams { config: config.clone(), values })
}

/// Diagonal Gaussian over one `[p x N_d]` patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGaussian {
    pub mean: Matrix,
    pub log_std: Matrix,
}

impl PatchGaussian {
    /// Summed log-density of `patch`.
    pub fn log_prob(&self, patch: &Matrix) -> f64 {
        gaussian_log_prob(self.mean.as_slice(), self.log_std.as_slice(), patch.as_slice())
    }
}

fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), v)| {
            let z = (v - m) * libm::exp(-ls);
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// A window prepared for the network: flattened normalized context features
/// and the target statistics used to map patches to and from raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedContext {
    pub features: Vec<f64>,
    pub target_stats: NormStats,
}

impl EncodedContext {
    pub fn new(window: &ForecastWindow, config: &PolicyConfig) -> Result<Self> {
        let (ys, xs) = context_norm_stats(window);
        Self::with_stats(window, config, ys, &xs)
    }

    /// Encodes with explicit context statistics for targets and covariates.
    pub fn with_stats(window: &ForecastWindow, config: &PolicyConfig, target_stats: NormStats, cov_stats: &NormStats) -> Result<Self> {
        window.context_y.ensure_shape(config.context_len(), config.num_target_variates, "context targets")?;
        window.context_x.ensure_shape(config.context_len(), config.num_covariates, "context covariates")?;
        let mut features = normalize(&window.context_y, &target_stats)?.into_vec();
        features.extend(normalize(&window.context_x, cov_stats)?.into_vec());
        Ok(Self { features, target_stats })
    }

    /// Ground-truth target cut into normalized patches.
    pub fn target_patches(&self, window: &ForecastWindow, layout: PatchLayout) -> Result<Vec<Matrix>> {
        window.target_y.ensure_shape(layout.horizon(), self.target_stats.channels(), "target")?;
        let norm = normalize(&window.target_y, &self.target_stats)?;
        Ok((0..layout.num_patches).map(|t| norm.slice_rows(t * layout.patch_len, (t + 1) * layout.patch_len)).collect())
    }

    /// Stacks normalized patches and maps them to raw units.
    pub fn to_raw(&self, patches: &[Matrix]) -> Result<Matrix> {
        let mut stacked = Matrix::zeros(0, self.target_stats.channels());
        for p in patches {
            stacked = stacked.vstack(p)?;
        }
        denormalize(&stacked, &self.target_stats)
    }
}

/// Output of one decoding step before the Gaussian head.
fn forward_step(
    params: &PolicyParams,
    features: &[f64],
    prev: &[Matrix],
    t: usize,
    mut tape: Option<&mut ComputationTape>,
) -> Vec<f64> {
    let cfg = &params.config;
    let patch_dim = cfg.patch_dim();
    let mut input = Vec::with_capacity(cfg.input_dim());
    input.extend_from_slice(features);
    for slot in 0..cfg.num_patches - 1 {
        match prev.get(slot) {
            Some(p) if slot < t => input.extend_from_slice(p.as_slice()),
            _ => input.extend(core::iter::repeat(0.0).take(patch_dim)),
        }
    }
    input.extend((0..cfg.num_patches).map(|i| if i == t { 1.0 } else { 0.0 }));
    debug_assert_eq!(input.len(), cfg.input_dim());

    let shapes = params.layer_shapes();
    let mut x = input;
    for (l, s) in shapes.iter().enumerate() {
        let w = &params.values[s.offset..s.offset + s.inputs * s.outputs];
        let b = &params.values[s.offset + s.inputs * s.outputs..s.offset + s.inputs * s.outputs + s.outputs];
        let mut y: Vec<f64> = b.to_vec();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * s.inputs..(o + 1) * s.inputs];
            *yo += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        }
        if let Some(tape) = tape.as_deref_mut() {
            tape.push(TapeOp::Affine { layer: l, input: x });
        }
        x = y;
        if l + 1 < shapes.len() {
            for v in &mut x {
                *v = libm::tanh(*v);
            }
            if let Some(tape) = tape.as_deref_mut() {
                tape.push(TapeOp::Tanh { output: x.clone() });
            }
        }
    }
    x
}

fn head_to_gaussian(cfg: &PolicyConfig, raw: &[f64]) -> PatchGaussian {
    let n = cfg.patch_dim();
    let mean = Matrix::from_vec(cfg.patch_len, cfg.num_target_variates, raw[..n].to_vec()).expect("head size");
    let ls: Vec<f64> = raw[n..].iter().map(|v| v.clamp(cfg.min_log_std, cfg.max_log_std)).collect();
    let log_std = Matrix::from_vec(cfg.patch_len, cfg.num_target_variates, ls).expect("head size");
    PatchGaussian { mean, log_std }
}

/// Distribution of patch `t` (0-based) given the context features and the
/// `t` previously decoded patches. Slots at or beyond `t` read as zeros.
pub fn step_distribution(params: &PolicyParams, context_features: &[f64], prev_patches: &[Matrix], t: usize) -> Result<PatchGaussian> {
    let cfg = &params.config;
    if t >= cfg.num_patches {
        return Err(invalid!("step {t} outside 0..{}", cfg.num_patches));
    }
    if context_features.len() != cfg.context_feature_dim() {
        return Err(shape!("{} context features, expected {}", context_features.len(), cfg.context_feature_dim()));
    }
    if prev_patches.len() < t {
        return Err(shape!("step {t} needs {t} previous patches, got {}", prev_patches.len()));
    }
    for p in &prev_patches[..t] {
        p.ensure_shape(cfg.patch_len, cfg.num_target_variates, "previous patch")?;
    }
    let raw = forward_step(params, context_features, prev_patches, t, None);
    Ok(head_to_gaussian(cfg, &raw))
}

/// One sampled trajectory in normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub patches: Vec<Matrix>,
    pub step_log_probs: Vec<f64>,
    pub seed: u64,
}

/// Samples all patches autoregressively, recording each step's log-density.
pub fn sample_rollout(params: &PolicyParams, context: &EncodedContext, seed: u64) -> Rollout {
    let cfg = &params.config;
    let mut rng = rng_from_seed(seed);
    let mut patches: Vec<Matrix> = Vec::with_capacity(cfg.num_patches);
    let mut step_log_probs = Vec::with_capacity(cfg.num_patches);
    for t in 0..cfg.num_patches {
        let raw = forward_step(params, &context.features, &patches, t, None);
        let dist = head_to_gaussian(cfg, &raw);
        let mut patch = dist.mean.clone();
        for (v, ls) in patch.as_mut_slice().iter_mut().zip(dist.log_std.as_slice()) {
            *v += libm::exp(*ls) * standard_normal(&mut rng);
        }
        step_log_probs.push(dist.log_prob(&patch));
        patches.push(patch);
    }
    Rollout { patches, step_log_probs, seed }
}

/// Teacher-forced per-step log-densities of `patches`.
pub fn log_prob(params: &PolicyParams, context: &EncodedContext, patches: &[Matrix]) -> Result<Vec<f64>> {
    check_patches(&params.config, patches)?;
    Ok((0..patches.len())
        .map(|t| {
            let raw = forward_step(params, &context.features, patches, t, None);
            let dist = head_to_gaussian(&params.config, &raw);
            dist.log_prob(&patches[t])
        })
        .collect())
}

/// [`log_prob`] that also records every step on `tape`. Output `i` of the
/// tape is step `i` of this call, offset by the outputs already on the tape.
pub fn log_prob_recorded(params: &PolicyParams, context: &EncodedContext, patches: &[Matrix], tape: &mut ComputationTape) -> Result<Vec<f64>> {
    let cfg = &params.config;
    check_patches(cfg, patches)?;
    let mut out = Vec::with_capacity(patches.len());
    for t in 0..patches.len() {
        let raw = forward_step(params, &context.features, patches, t, Some(tape));
        let dist = head_to_gaussian(cfg, &raw);
        out.push(dist.log_prob(&patches[t]));
        let output = tape.next_output();
        tape.push(TapeOp::GaussianLogProb {
            raw,
            target: patches[t].as_slice().to_vec(),
            output,
            min_log_std: cfg.min_log_std,
            max_log_std: cfg.max_log_std,
        });
    }
    Ok(out)
}

fn check_patches(cfg: &PolicyConfig, patches: &[Matrix]) -> Result<()> {
    if patches.len() != cfg.num_patches {
        return Err(shape!("{} patches, layout has {}", patches.len(), cfg.num_patches));
    }
    for p in patches {
        p.ensure_shape(cfg.patch_len, cfg.num_target_variates, "patch")?;
    }
    Ok(())
}

/// Mean of `num_samples` raw-unit rollouts; rollout `i` uses
/// `derive_seed(seed, i)`.
pub fn point_forecast(params: &PolicyParams, window: &ForecastWindow, num_samples: usize, seed: u64) -> Result<Matrix> {
    if num_samples == 0 {
        return Err(invalid!("num_samples must be >= 1"));
    }
    let context = EncodedContext::new(window, &params.config)?;
    let cfg = &params.config;
    let mut acc = Matrix::zeros(cfg.horizon(), cfg.num_target_variates);
    for i in 0..num_samples {
        let r = sample_rollout(params, &context, derive_seed(seed, i as u64));
        let raw = context.to_raw(&r.patches)?;
        for (a, v) in acc.as_mut_slice().iter_mut().zip(raw.as_slice()) {
            *a += v;
        }
    }
    for a in acc.as_mut_slice() {
        *a /= num_samples as f64;
    }
    Ok(acc)
}

/// `num_samples` raw-unit rollouts (for interval estimation).
pub fn sample_paths(params: &PolicyParams, window: &ForecastWindow, num_samples: usize, seed: u64) -> Result<Vec<Matrix>> {
    let context = EncodedContext::new(window, &params.config)?;
    (0..num_samples)
        .map(|i| {
            let r = sample_rollout(params, &context, derive_seed(seed, i as u64));
            context.to_raw(&r.patches)
        })
        .collect()
}
