use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use timerft::config::{self, ConfigErrors, RunConfig};
use timerft::pipeline;

#[derive(Parser)]
#[command(name = "timerft", version, about = "Reinforcement fine-tuning for time-series forecasting policies")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.max_steps=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Initial policy checkpoint (overrides `pipeline.init_checkpoint`).
    #[arg(long, global = true)]
    init: Option<PathBuf>,
    /// Reference policy checkpoint (overrides `pipeline.ref_checkpoint`).
    #[arg(long = "ref", global = true)]
    reference: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic series to data.csv.
    Synth,
    /// Score every training window and write the kept list.
    Select,
    /// Supervised fine-tuning on all training windows.
    TrainSft,
    /// Reinforcement fine-tuning on the kept training windows.
    TrainRft,
    /// Evaluate a checkpoint on the configured split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write per-window metrics as CSV.
        #[arg(long)]
        per_window_csv: bool,
    },
    /// Evaluate two checkpoints on the same windows and samples.
    Compare {
        /// Baseline checkpoint.
        #[arg(long)]
        a: PathBuf,
        /// Candidate checkpoint.
        #[arg(long)]
        b: PathBuf,
    },
    /// Reward and advantage tables for externally supplied forecasts.
    Score {
        /// JSON file `{"gt": [[..]], "forecasts": [[[..]]]}` in raw units.
        #[arg(long)]
        forecasts: PathBuf,
    },
    /// Print the resolved configuration without running anything.
    Config,
}

fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let mut overrides = common.overrides.clone();
    let path_override = |key: &str, p: &PathBuf| format!("{key}={}", serde_json::Value::String(p.display().to_string()));
    if let Some(p) = &common.out {
        overrides.push(path_override("output_dir", p));
    }
    if let Some(p) = &common.init {
        overrides.push(path_override("pipeline.init_checkpoint", p));
    }
    if let Some(p) = &common.reference {
        overrides.push(path_override("pipeline.ref_checkpoint", p));
    }
    config::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg),
        Command::Select => pipeline::cmd_select(&cfg),
        Command::TrainSft => pipeline::cmd_train_sft(&cfg),
        Command::TrainRft => pipeline::cmd_train_rft(&cfg),
        Command::Eval { checkpoint, per_window_csv } => pipeline::cmd_eval(&cfg, &checkpoint, per_window_csv),
        Command::Compare { a, b } => pipeline::cmd_compare(&cfg, &a, &b),
        Command::Score { forecasts } => pipeline::cmd_score(&cfg, &forecasts),
        Command::Config => Ok(serde_json::to_value(&cfg)?),
    }
}

fn error_json(err: &anyhow::Error) -> serde_json::Value {
    if let Some(ce) = err.downcast_ref::<ConfigErrors>() {
        return serde_json::json!({"error": "invalid_config", "violations": ce.violations});
    }
    serde_json::json!({
        "error": "failed",
        "message": err.to_string(),
        "causes": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
