//! Run configuration: one JSON document, every section optional, unknown keys
//! rejected. `--set a.b=value` overrides are applied to the JSON tree before
//! deserialization.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use timerft_core::advantage::ShapingConfig;
use timerft_core::policy::PolicyConfig;
use timerft_core::reward::RewardWeights;
use timerft_core::selection::SelectionThresholds;
use timerft_core::series::PatchLayout;
use timerft_core::synth::{ShiftKind, ShiftSpec, SynthSpec};
use timerft_core::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// CSV input; when absent the series comes from `synth_spec`, which in
    /// turn defaults to [`reference_synth_spec`].
    pub csv_path: Option<PathBuf>,
    pub synth_spec: Option<SynthSpec>,
    pub synth_seed: u64,
    #[serde(rename = "L")]
    pub context_len: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "W")]
    pub num_eval_windows: usize,
    pub p: usize,
    /// Few-shot share of training windows (latest windows kept).
    pub fraction: f64,
    pub stride: usize,
    /// Share of training windows replaced by white noise before selection.
    pub noise_fraction: f64,
    pub noise_seed: u64,
}

/// The distribution-shift benchmark: two sinusoids plus noise, amplitude
/// scaled by 1.5 from 60% of the series onward.
pub fn reference_synth_spec() -> SynthSpec {
    SynthSpec {
        num_channels: 1,
        length: 1600,
        base_freqs: vec![1.0 / 32.0, 1.0 / 8.0],
        amplitudes: vec![1.0, 0.5],
        noise_std: 0.1,
        shift: ShiftSpec { kind: ShiftKind::Amplitude, onset_fraction: 0.6, magnitude: 1.5 },
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            csv_path: None,
            synth_spec: None,
            synth_seed: 0,
            context_len: 64,
            horizon: 32,
            num_eval_windows: 8,
            p: 8,
            fraction: 1.0,
            stride: 1,
            noise_fraction: 0.0,
            noise_seed: 0,
        }
    }
}

/// Architecture knobs; the data-dependent sizes come from [`DataConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub hidden_widths: Vec<usize>,
    pub min_log_std: f64,
    pub max_log_std: f64,
    pub init_seed: u64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let d = PolicyConfig::default();
        Self { hidden_widths: d.hidden_widths, min_log_std: d.min_log_std, max_log_std: d.max_log_std, init_seed: 0 }
    }
}

/// Stand-in for a pretrained model: a short supervised run on a held-out
/// synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub corpus: PretrainCorpus,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub num_series: usize,
    pub windows_per_series: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { corpus: PretrainCorpus::Auto, steps: 300, batch_size: 32, learning_rate: 3e-3, num_series: 32, windows_per_series: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PretrainCorpus {
    /// `family` for synthetic runs, `mixture` for CSV runs.
    #[default]
    Auto,
    /// Random sinusoid mixtures with periods 4 to 64.
    Mixture,
    /// Held-out seeds of the run's synthetic spec without its shift.
    Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Val,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub num_samples: usize,
    pub seed: u64,
    pub split: EvalSplit,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { num_samples: 100, seed: 20_240_917, split: EvalSplit::Test }
    }
}

/// Which checkpoints play the initial policy and the KL reference, and
/// whether RFT trains on the selected windows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Initial policy; absent means the pretraining stand-in.
    pub init_checkpoint: Option<PathBuf>,
    /// KL reference; absent means the initial policy.
    pub ref_checkpoint: Option<PathBuf>,
    pub use_selection: bool,
    pub selection_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { init_checkpoint: None, ref_checkpoint: None, use_selection: true, selection_seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub policy: PolicySection,
    pub pretrain: PretrainConfig,
    pub selection: SelectionThresholds,
    pub rewards: RewardWeights,
    pub shaping: ShapingConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub pipeline: PipelineConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self::base();
        cfg.materialize();
        cfg
    }
}

impl RunConfig {
    /// Defaults before [`RunConfig::materialize`]: no data source chosen.
    fn base() -> Self {
        Self {
            data: DataConfig::default(),
            policy: PolicySection::default(),
            pretrain: PretrainConfig::default(),
            selection: SelectionThresholds::default(),
            rewards: RewardWeights::default(),
            shaping: ShapingConfig::default(),
            train: TrainConfig { batch_size: 16, group_size: 4, max_steps: 200, eval_every: 50, ..TrainConfig::default() },
            eval: EvalConfig::default(),
            pipeline: PipelineConfig::default(),
            output_dir: PathBuf::from("timerft-out"),
        }
    }
}

/// Every violation found, not only the first.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {}", .violations.join("; "))]
pub struct ConfigErrors {
    pub violations: Vec<String>,
}

impl RunConfig {
    /// Fills defaults that depend on other fields.
    pub fn materialize(&mut self) {
        if self.data.csv_path.is_none() && self.data.synth_spec.is_none() {
            self.data.synth_spec = Some(reference_synth_spec());
        }
    }

    /// Horizon after truncation to whole patches.
    pub fn effective_horizon(&self) -> usize {
        PatchLayout::aligned_horizon(self.data.horizon, self.data.p)
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigErrors> {
        let mut v = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                v.push(msg.to_owned());
            }
        };
        let d = &self.data;
        check(!(d.csv_path.is_some() && d.synth_spec.is_some()), "data: set either csv_path or synth_spec, not both");
        check(d.horizon >= 1, "data.H must be >= 1");
        check(d.p >= 1, "data.p must be >= 1");
        check(d.p <= d.horizon, "data.p must not exceed data.H");
        check(d.num_eval_windows >= 1, "data.W must be >= 1");
        check(d.fraction > 0.0 && d.fraction <= 1.0, "data.fraction must lie in (0, 1]");
        check(d.stride >= 1, "data.stride must be >= 1");
        check((0.0..=1.0).contains(&d.noise_fraction), "data.noise_fraction must lie in [0, 1]");
        let h = self.effective_horizon();
        check(h == 0 || (d.context_len >= h && d.context_len % h == 0), "data.L must be a positive multiple of the (patch-aligned) horizon");
        if let Some(spec) = &d.synth_spec {
            if let Err(e) = spec.validate() {
                v.push(format!("data.synth_spec: {e}"));
            }
        }
        let check_core = |v: &mut Vec<String>, section: &str, r: timerft_core::Result<()>| {
            if let Err(e) = r {
                v.push(format!("{section}: {e}"));
            }
        };
        if self.policy.hidden_widths.contains(&0) {
            v.push("policy.hidden_widths entries must be >= 1".into());
        }
        if !(self.policy.min_log_std < self.policy.max_log_std) {
            v.push("policy.min_log_std must be below policy.max_log_std".into());
        }
        check_core(&mut v, "selection", self.selection.validate());
        check_core(&mut v, "rewards", self.rewards.validate());
        check_core(&mut v, "shaping", self.shaping.validate());
        check_core(&mut v, "train", self.train.validate());
        if self.pretrain.batch_size == 0 || self.pretrain.num_series == 0 || self.pretrain.windows_per_series == 0 {
            v.push("pretrain.batch_size, num_series and windows_per_series must be >= 1".into());
        }
        if self.pretrain.corpus == PretrainCorpus::Family && self.data.synth_spec.is_none() {
            v.push("pretrain.corpus = family needs data.synth_spec".into());
        }
        if !(self.pretrain.learning_rate > 0.0) {
            v.push("pretrain.learning_rate must be > 0".into());
        }
        if self.eval.num_samples == 0 {
            v.push("eval.num_samples must be >= 1".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors { violations: v })
        }
    }

    /// Full policy architecture for a series with `nd` targets and `nc`
    /// covariates.
    pub fn policy_config(&self, nd: usize, nc: usize) -> PolicyConfig {
        let h = self.effective_horizon();
        PolicyConfig {
            context_multiplier: self.data.context_len / h,
            hidden_widths: self.policy.hidden_widths.clone(),
            patch_len: self.data.p,
            num_patches: h / self.data.p,
            num_target_variates: nd,
            num_covariates: nc,
            min_log_std: self.policy.min_log_std,
            max_log_std: self.policy.max_log_std,
        }
    }
}

/// Sets `path` (dot-separated) in `root` to `raw`, parsed as JSON when it
/// parses and as a string otherwise. Intermediate objects are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| anyhow!("override {assignment:?} is not key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(anyhow!("override key {path:?} has an empty segment"));
    }
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(anyhow!("override {path:?}: {key:?} is not inside an object"));
        }
        node = node.as_object_mut().expect("checked").entry(*key).or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    let obj = node.as_object_mut().ok_or_else(|| anyhow!("override {path:?} does not address an object field"))?;
    obj.insert(keys[keys.len() - 1].to_owned(), value);
    Ok(())
}

/// Parses a config document (or `{}` when `path` is `None`), applies the
/// overrides and validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut root: Value = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    from_value(root)
}

/// Objects merge key by key; anything else in `top` replaces `base`.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Layers `root` over the run defaults, so a partial section keeps the
/// run-level defaults of its other fields.
pub fn from_value(mut root: Value) -> Result<RunConfig> {
    // `train.G` is an alias; store it under the canonical key before merging.
    if let Some(train) = root.get_mut("train").and_then(Value::as_object_mut) {
        if let Some(g) = train.remove("G") {
            if train.contains_key("group_size") {
                return Err(anyhow!("train: set G or group_size, not both"));
            }
            train.insert("group_size".into(), g);
        }
    }
    let mut full = serde_json::to_value(RunConfig::base())?;
    merge(&mut full, root);
    let mut cfg: RunConfig = serde_json::from_value(full).context("config does not match the schema")?;
    cfg.materialize();
    cfg.validate()?;
    Ok(cfg)
}
