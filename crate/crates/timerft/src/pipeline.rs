//! The end-to-end recipe and the file artifacts of each command.
//!
//! Every function here is deterministic given the [`RunConfig`]: randomness
//! flows only from config seeds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use timerft_core::advantage::{shape_table, step_advantages, AdvantageTable};
use timerft_core::eval::{compare, evaluate, ComparisonSummary, EvalReport};
use timerft_core::policy::{init_policy, PolicyConfig, PolicyParams};
use timerft_core::reward::{build_reward_table, RewardTable};
use timerft_core::rng::derive_seed;
use timerft_core::selection::{select, Decision, DropReason};
use timerft_core::series::{
    salt_with_noise, split_eval_windows_strided, subsample_fraction, target_norm_stats, DatasetSplit, ForecastWindow, MultivariateSeries,
    NormStats,
};
use timerft_core::synth::{family_corpus, generate_synthetic, pretraining_corpus};
use timerft_core::trainer::{train_rft, train_sft, RewardSetup, RftStepTrace, TrainConfig, TrainObserver, TrainOutcome, TrainRecord};
use timerft_core::Matrix;

use crate::checkpoint;
use crate::config::{EvalSplit, PretrainCorpus, RunConfig};
use crate::csv_io::{load_csv, write_csv};
use crate::manifest;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";
pub const DATA_FILE: &str = "data.csv";
pub const SYNTH_SPEC_FILE: &str = "synth_spec.json";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const KEPT_FILE: &str = "kept_windows.json";
pub const INITIAL_POLICY_FILE: &str = "initial_policy.json";

/// One line of the verdicts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub origin_index: usize,
    pub decision: Decision,
    pub reason: DropReason,
    pub picp50: f64,
    pub picp90: f64,
    pub se: f64,
}

/// The kept training windows plus a fingerprint of every setting that fed
/// the selection, so stale files are caught.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptWindows {
    pub fingerprint: String,
    pub origin_indices: Vec<usize>,
}

/// Loaded data, split into training and evaluation windows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub series: MultivariateSeries,
    pub split: DatasetSplit,
    /// Origins of training windows replaced by noise.
    pub salted: Vec<usize>,
    pub policy_config: PolicyConfig,
}

pub fn load_series(cfg: &RunConfig) -> Result<MultivariateSeries> {
    match (&cfg.data.csv_path, &cfg.data.synth_spec) {
        (Some(path), None) => Ok(load_csv(path)?),
        (None, Some(spec)) => Ok(generate_synthetic(spec, cfg.data.synth_seed)?),
        _ => bail!("data: set exactly one of csv_path or synth_spec"),
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let series = load_series(cfg)?;
    prepare_series(cfg, series)
}

pub fn prepare_series(cfg: &RunConfig, series: MultivariateSeries) -> Result<Prepared> {
    let h = cfg.effective_horizon();
    if h != cfg.data.horizon {
        warn!("horizon {} is not a multiple of patch length {}; truncating to {h}", cfg.data.horizon, cfg.data.p);
    }
    let full = split_eval_windows_strided(&series, cfg.data.num_eval_windows, h, cfg.data.context_len, cfg.data.stride)?;
    let few = subsample_fraction(&full, cfg.data.fraction)?;
    let (split, salted) = if cfg.data.noise_fraction > 0.0 {
        salt_with_noise(&few, cfg.data.noise_fraction, cfg.data.noise_seed)?
    } else {
        (few, Vec::new())
    };
    info!(
        "{} training windows ({} salted), {} val, {} test",
        split.train_windows.len(),
        salted.len(),
        split.val_windows.len(),
        split.test_windows.len()
    );
    let policy_config = cfg.policy_config(series.num_targets(), series.num_covariates());
    Ok(Prepared { series, split, salted, policy_config })
}

/// SFT warm start on a synthetic corpus disjoint from the run's data.
pub fn pretrain(cfg: &RunConfig, pc: &PolicyConfig) -> Result<PolicyParams> {
    let p = &cfg.pretrain;
    let family = match (p.corpus, &cfg.data.synth_spec) {
        (PretrainCorpus::Mixture, _) | (PretrainCorpus::Auto, None) => None,
        (_, Some(spec)) => Some(spec),
        (PretrainCorpus::Family, None) => bail!("pretrain.corpus = family needs data.synth_spec"),
    };
    let mut corpus = match family {
        Some(spec) => family_corpus(spec, p.num_series, p.windows_per_series, pc.context_len(), pc.horizon(), p.seed)?,
        None => pretraining_corpus(p.num_series, p.windows_per_series, pc.num_target_variates, pc.context_len(), pc.horizon(), p.seed)?,
    };
    for w in &mut corpus {
        w.context_x = Matrix::zeros(pc.context_len(), pc.num_covariates);
    }
    let init = init_policy(pc, cfg.policy.init_seed)?;
    if p.steps == 0 {
        return Ok(init);
    }
    let split = DatasetSplit { train_windows: corpus, val_windows: Vec::new(), test_windows: Vec::new() };
    let tc = TrainConfig {
        batch_size: p.batch_size,
        learning_rate: p.learning_rate,
        max_steps: p.steps,
        eval_every: 0,
        seed: p.seed,
        ..TrainConfig::default()
    };
    Ok(train_sft(&init, &split, &tc, &mut ())?.final_params)
}

fn load_matching(path: &Path, pc: &PolicyConfig) -> Result<PolicyParams> {
    let params = checkpoint::load(path)?;
    ensure!(
        params.config == *pc,
        "checkpoint {} has architecture {:?}, the run needs {:?}",
        path.display(),
        params.config,
        pc
    );
    Ok(params)
}

/// The initial policy: a checkpoint when configured, otherwise the
/// pretraining stand-in.
pub fn initial_policy(cfg: &RunConfig, pc: &PolicyConfig) -> Result<PolicyParams> {
    match &cfg.pipeline.init_checkpoint {
        Some(path) => load_matching(path, pc),
        None => pretrain(cfg, pc),
    }
}

pub fn reference_policy(cfg: &RunConfig, pc: &PolicyConfig, initial: &PolicyParams) -> Result<PolicyParams> {
    match &cfg.pipeline.ref_checkpoint {
        Some(path) => load_matching(path, pc),
        None => Ok(initial.clone()),
    }
}

pub fn run_selection(cfg: &RunConfig, policy: &PolicyParams, split: &DatasetSplit) -> Result<Vec<VerdictLine>> {
    split
        .train_windows
        .iter()
        .map(|w| {
            let v = select(w, policy, &cfg.selection, derive_seed(cfg.pipeline.selection_seed, w.origin_index as u64))?;
            Ok(VerdictLine { origin_index: w.origin_index, decision: v.decision, reason: v.reason, picp50: v.picp50, picp90: v.picp90, se: v.se })
        })
        .collect()
}

pub fn kept_origins(verdicts: &[VerdictLine]) -> Vec<usize> {
    verdicts.iter().filter(|v| v.decision == Decision::Kept).map(|v| v.origin_index).collect()
}

/// `split` restricted to training windows whose origin is in `origins`.
pub fn restrict(split: &DatasetSplit, origins: &[usize]) -> DatasetSplit {
    let keep: std::collections::BTreeSet<usize> = origins.iter().copied().collect();
    DatasetSplit {
        train_windows: split.train_windows.iter().filter(|w| keep.contains(&w.origin_index)).cloned().collect(),
        val_windows: split.val_windows.clone(),
        test_windows: split.test_windows.clone(),
    }
}

/// Hash of every setting the selection result depends on.
pub fn selection_fingerprint(cfg: &RunConfig) -> Result<String> {
    let v = serde_json::json!({
        "data": cfg.data,
        "policy": cfg.policy,
        "pretrain": cfg.pretrain,
        "selection": cfg.selection,
        "init_checkpoint": cfg.pipeline.init_checkpoint,
        "selection_seed": cfg.pipeline.selection_seed,
    });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&v)?)))
}

pub fn eval_windows<'a>(cfg: &RunConfig, split: &'a DatasetSplit) -> &'a [ForecastWindow] {
    match cfg.eval.split {
        EvalSplit::Val => &split.val_windows,
        EvalSplit::Test => &split.test_windows,
    }
}

pub fn evaluate_policy(cfg: &RunConfig, params: &PolicyParams, split: &DatasetSplit) -> Result<EvalReport> {
    Ok(evaluate(params, eval_windows(cfg, split), cfg.eval.num_samples, cfg.eval.seed)?)
}

/// Collects the per-step streams of a training run.
#[derive(Default)]
pub struct Recorder {
    pub records: Vec<TrainRecord>,
    pub traces: Vec<RftStepTrace>,
    pub validation: Vec<(usize, f64)>,
    pub skipped: Vec<usize>,
    wall_clock: Option<Instant>,
}

impl Recorder {
    pub fn new(record_wall_time: bool) -> Self {
        Self { wall_clock: record_wall_time.then(Instant::now), ..Self::default() }
    }
}

impl TrainObserver for Recorder {
    fn on_record(&mut self, record: &mut TrainRecord) {
        if let Some(start) = self.wall_clock {
            record.wall_time_ms = start.elapsed().as_millis() as u64;
        }
        self.records.push(record.clone());
    }

    fn on_rft_step(&mut self, trace: &RftStepTrace) {
        self.traces.push(trace.clone());
    }

    fn on_validation(&mut self, step: usize, val_mse: f64) {
        info!("step {step}: validation MSE {val_mse:.6}");
        self.validation.push((step, val_mse));
    }

    fn on_skipped_step(&mut self, step: usize) {
        warn!("step {step}: non-finite gradient, update skipped");
        self.skipped.push(step);
    }
}

pub fn run_sft(cfg: &RunConfig, init: &PolicyParams, split: &DatasetSplit) -> Result<(TrainOutcome, Recorder)> {
    let mut rec = Recorder::new(cfg.train.record_wall_time);
    let out = train_sft(init, split, &cfg.train, &mut rec)?;
    Ok((out, rec))
}

pub fn run_rft(cfg: &RunConfig, init: &PolicyParams, reference: &PolicyParams, split: &DatasetSplit) -> Result<(TrainOutcome, Recorder)> {
    let mut rec = Recorder::new(cfg.train.record_wall_time);
    let setup = RewardSetup { weights: cfg.rewards, shaping: cfg.shaping };
    let out = train_rft(init, reference, split, &cfg.train, &setup, &mut rec)?;
    Ok((out, rec))
}

/// Test-split result of one RFT arm.
#[derive(Debug, Clone)]
pub struct RftArm {
    pub report: EvalReport,
    pub verdicts: Vec<VerdictLine>,
    pub train_windows: usize,
    pub outcome: TrainOutcome,
}

/// RFT on the selected training windows (all of them when
/// `pipeline.use_selection` is off), evaluated at the best validation step.
pub fn rft_arm(cfg: &RunConfig, prep: &Prepared, init: &PolicyParams, reference: &PolicyParams) -> Result<RftArm> {
    let (split, verdicts) = if cfg.pipeline.use_selection {
        let verdicts = run_selection(cfg, init, &prep.split)?;
        (restrict(&prep.split, &kept_origins(&verdicts)), verdicts)
    } else {
        (prep.split.clone(), Vec::new())
    };
    ensure!(!split.train_windows.is_empty(), "selection dropped every training window");
    let (outcome, _) = run_rft(cfg, init, reference, &split)?;
    Ok(RftArm { report: evaluate_policy(cfg, &outcome.best_params, &prep.split)?, verdicts, train_windows: split.train_windows.len(), outcome })
}

/// SFT on all training windows, evaluated at the best validation step.
pub fn sft_arm(cfg: &RunConfig, prep: &Prepared, init: &PolicyParams) -> Result<(EvalReport, TrainOutcome)> {
    let (outcome, _) = run_sft(cfg, init, &prep.split)?;
    Ok((evaluate_policy(cfg, &outcome.best_params, &prep.split)?, outcome))
}

/// Test-split results of the SFT baseline and the full RFT recipe started
/// from the same initial policy with the same step budget.
#[derive(Debug, Clone)]
pub struct RecipeResult {
    pub initial: EvalReport,
    pub sft: EvalReport,
    pub rft: RftArm,
}

pub fn run_recipe(cfg: &RunConfig) -> Result<RecipeResult> {
    let prep = prepare(cfg)?;
    let init = initial_policy(cfg, &prep.policy_config)?;
    let reference = reference_policy(cfg, &prep.policy_config, &init)?;
    let rft = rft_arm(cfg, &prep, &init, &reference)?;
    let (sft, _) = sft_arm(cfg, &prep, &init)?;
    Ok(RecipeResult { initial: evaluate_policy(cfg, &init, &prep.split)?, sft, rft })
}

/// Everything `score` prints for externally supplied forecasts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreInput {
    /// `[H][N_d]` ground truth in raw units.
    pub gt: Vec<Vec<f64>>,
    /// `[G][H][N_d]` forecasts in raw units.
    pub forecasts: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub norm_stats: NormStats,
    pub rewards: RewardTable,
    pub shaped: RewardTable,
    pub advantages: AdvantageTable,
}

pub fn score(cfg: &RunConfig, input: &ScoreInput) -> Result<ScoreOutput> {
    let gt = Matrix::from_rows(&input.gt)?;
    let group = input.forecasts.iter().map(|f| Matrix::from_rows(f)).collect::<timerft_core::Result<Vec<_>>>()?;
    ensure!(!group.is_empty(), "no forecasts to score");
    ensure!(gt.rows() % cfg.data.p == 0, "ground truth has {} rows, not a multiple of p = {}", gt.rows(), cfg.data.p);
    let layout = timerft_core::series::PatchLayout::for_horizon(gt.rows(), cfg.data.p)?;
    let window = ForecastWindow { context_y: Matrix::zeros(0, gt.cols()), context_x: Matrix::zeros(0, 0), target_y: gt.clone(), origin_index: 0 };
    let stats = target_norm_stats(&window);
    let rewards = build_reward_table(&group, &gt, layout, &stats, &cfg.rewards)?;
    let shaped = shape_table(&rewards, &cfg.shaping);
    let advantages = step_advantages(&shaped);
    Ok(ScoreOutput { norm_stats: stats, rewards, shaped, advantages })
}

/// Output directory of one command invocation.
pub struct Outputs {
    pub dir: PathBuf,
}

impl Outputs {
    /// Creates the directory and writes the resolved config.
    pub fn open(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.output_dir.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let out = Self { dir };
        out.write_json(RESOLVED_CONFIG_FILE, cfg)?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut buf = Vec::new();
        for item in items {
            serde_json::to_writer(&mut buf, item)?;
            buf.push(b'\n');
        }
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(&buf))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_checkpoint(&self, name: &str, params: &PolicyParams) -> Result<PathBuf> {
        let path = self.path(name);
        checkpoint::save(params, &path)?;
        Ok(path)
    }

    pub fn finish(&self) -> Result<()> {
        manifest::refresh(&self.dir)?;
        Ok(())
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<serde_json::Value> {
    let spec = cfg.data.synth_spec.as_ref().context("synth needs data.synth_spec (data.csv_path is set)")?;
    let series = generate_synthetic(spec, cfg.data.synth_seed)?;
    let out = Outputs::open(cfg)?;
    let file = fs::File::create(out.path(DATA_FILE))?;
    write_csv(&series, std::io::BufWriter::new(file))?;
    out.write_json(SYNTH_SPEC_FILE, &serde_json::json!({"spec": spec, "seed": cfg.data.synth_seed}))?;
    out.finish()?;
    Ok(serde_json::json!({"data": out.path(DATA_FILE), "rows": series.len(), "targets": series.num_targets()}))
}

pub fn cmd_select(cfg: &RunConfig) -> Result<serde_json::Value> {
    let prep = prepare(cfg)?;
    let init = initial_policy(cfg, &prep.policy_config)?;
    let verdicts = run_selection(cfg, &init, &prep.split)?;
    let kept = KeptWindows { fingerprint: selection_fingerprint(cfg)?, origin_indices: kept_origins(&verdicts) };
    let out = Outputs::open(cfg)?;
    out.write_jsonl(VERDICTS_FILE, &verdicts)?;
    out.write_json(KEPT_FILE, &kept)?;
    out.write_checkpoint(INITIAL_POLICY_FILE, &init)?;
    out.finish()?;
    let count = |r: DropReason| verdicts.iter().filter(|v| v.reason == r).count();
    Ok(serde_json::json!({
        "windows": verdicts.len(),
        "kept": kept.origin_indices.len(),
        "easy_picp": count(DropReason::EasyPICP),
        "hard_picp": count(DropReason::HardPICP),
        "high_se": count(DropReason::HighSE),
    }))
}

fn write_training(out: &Outputs, prefix: &str, outcome: &TrainOutcome, rec: &Recorder) -> Result<()> {
    out.write_jsonl(&format!("{prefix}_records.jsonl"), &rec.records)?;
    if !rec.traces.is_empty() {
        out.write_jsonl(&format!("{prefix}_trace.jsonl"), &rec.traces)?;
    }
    out.write_json(
        &format!("{prefix}_validation.json"),
        &serde_json::json!({"history": outcome.val_history, "best_step": outcome.best_step, "best_val_mse": outcome.best_val_mse, "skipped_steps": rec.skipped}),
    )?;
    out.write_checkpoint(&format!("{prefix}_best.json"), &outcome.best_params)?;
    out.write_checkpoint(&format!("{prefix}_final.json"), &outcome.final_params)?;
    Ok(())
}

fn summary(outcome: &TrainOutcome, prefix: &str, out: &Outputs) -> serde_json::Value {
    serde_json::json!({
        "steps": outcome.records.len(),
        "best_step": outcome.best_step,
        "best_val_mse": outcome.best_val_mse,
        "checkpoint": out.path(&format!("{prefix}_best.json")),
    })
}

pub fn cmd_train_sft(cfg: &RunConfig) -> Result<serde_json::Value> {
    let prep = prepare(cfg)?;
    let init = initial_policy(cfg, &prep.policy_config)?;
    let (outcome, rec) = run_sft(cfg, &init, &prep.split)?;
    let out = Outputs::open(cfg)?;
    write_training(&out, "sft", &outcome, &rec)?;
    out.finish()?;
    Ok(summary(&outcome, "sft", &out))
}

/// Training windows for RFT: the kept list from a previous `select` in the
/// same output directory, or all windows when selection is off.
fn rft_split(cfg: &RunConfig, prep: &Prepared) -> Result<DatasetSplit> {
    if !cfg.pipeline.use_selection {
        return Ok(prep.split.clone());
    }
    let path = cfg.output_dir.join(KEPT_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {} (run `select` first or set pipeline.use_selection=false)", path.display()))?;
    let kept: KeptWindows = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(
        kept.fingerprint == selection_fingerprint(cfg)?,
        "{} was produced with different data/policy/selection settings; rerun `select`",
        path.display()
    );
    let split = restrict(&prep.split, &kept.origin_indices);
    ensure!(!split.train_windows.is_empty(), "selection kept no training windows");
    Ok(split)
}

pub fn cmd_train_rft(cfg: &RunConfig) -> Result<serde_json::Value> {
    let prep = prepare(cfg)?;
    let split = rft_split(cfg, &prep)?;
    let init = initial_policy(cfg, &prep.policy_config)?;
    let reference = reference_policy(cfg, &prep.policy_config, &init)?;
    let (outcome, rec) = run_rft(cfg, &init, &reference, &split)?;
    let out = Outputs::open(cfg)?;
    write_training(&out, "rft", &outcome, &rec)?;
    out.finish()?;
    let mut s = summary(&outcome, "rft", &out);
    s["train_windows"] = split.train_windows.len().into();
    Ok(s)
}

fn report_name(checkpoint: &Path) -> String {
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "policy".into());
    format!("eval_{stem}.json")
}

fn evaluate_checkpoint(cfg: &RunConfig, prep: &Prepared, path: &Path) -> Result<EvalReport> {
    let params = load_matching(path, &prep.policy_config)?;
    evaluate_policy(cfg, &params, &prep.split)
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, per_window_csv: bool) -> Result<serde_json::Value> {
    let prep = prepare(cfg)?;
    let report = evaluate_checkpoint(cfg, &prep, checkpoint)?;
    let out = Outputs::open(cfg)?;
    let name = report_name(checkpoint);
    let path = out.write_json(&name, &report)?;
    if per_window_csv {
        let mut w = csv::Writer::from_path(out.path(&name.replace(".json", ".csv")))?;
        w.write_record(["window_index", "origin_index", "mse", "mae"])?;
        for s in &report.per_window {
            w.write_record([s.window_index.to_string(), s.origin_index.to_string(), format!("{:?}", s.mse), format!("{:?}", s.mae)])?;
        }
        w.flush()?;
    }
    out.finish()?;
    Ok(serde_json::json!({"report": path, "mse": report.aggregate_mse, "mae": report.aggregate_mae}))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonFile {
    pub baseline: PathBuf,
    pub candidate: PathBuf,
    pub baseline_mse: f64,
    pub candidate_mse: f64,
    pub baseline_mae: f64,
    pub candidate_mae: f64,
    pub summary: ComparisonSummary,
}

pub fn cmd_compare(cfg: &RunConfig, a: &Path, b: &Path) -> Result<serde_json::Value> {
    let prep = prepare(cfg)?;
    let ra = evaluate_checkpoint(cfg, &prep, a)?;
    let rb = evaluate_checkpoint(cfg, &prep, b)?;
    let file = ComparisonFile {
        baseline: a.to_path_buf(),
        candidate: b.to_path_buf(),
        baseline_mse: ra.aggregate_mse,
        candidate_mse: rb.aggregate_mse,
        baseline_mae: ra.aggregate_mae,
        candidate_mae: rb.aggregate_mae,
        summary: compare(&ra, &rb)?,
    };
    let out = Outputs::open(cfg)?;
    out.write_json("comparison.json", &file)?;
    out.finish()?;
    Ok(serde_json::to_value(&file)?)
}

pub fn cmd_score(cfg: &RunConfig, forecasts: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(forecasts).with_context(|| format!("reading {}", forecasts.display()))?;
    let input: ScoreInput = serde_json::from_str(&text).with_context(|| format!("parsing {}", forecasts.display()))?;
    let result = score(cfg, &input)?;
    let out = Outputs::open(cfg)?;
    let path = out.write_json("score.json", &result)?;
    out.finish()?;
    Ok(serde_json::json!({"score": path, "members": result.rewards.num_members()}))
}
