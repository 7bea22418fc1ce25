//! Policy checkpoints.
//!
//! A checkpoint is a JSON object
//!
//! ```json
//! {"format": "timerft-policy", "version": 1, "config": {...}, "values": [...]}
//! ```
//!
//! where `config` is the full `PolicyConfig` and `values` the flat parameter
//! vector in layer order (per layer: row-major `outputs x inputs` weights,
//! then the bias). Floats are written with shortest round-trip formatting, so
//! a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use timerft_core::policy::{PolicyConfig, PolicyParams};

pub const FORMAT: &str = "timerft-policy";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    format: String,
    version: u32,
    config: PolicyConfig,
    values: Vec<f64>,
}

pub fn to_json(params: &PolicyParams) -> Result<String> {
    let c = Container { format: FORMAT.into(), version: VERSION, config: params.config.clone(), values: params.values.clone() };
    Ok(serde_json::to_string(&c)?)
}

pub fn from_json(text: &str) -> Result<PolicyParams> {
    let c: Container = serde_json::from_str(text).context("not a policy checkpoint")?;
    if c.format != FORMAT {
        bail!("checkpoint format {:?}, expected {FORMAT:?}", c.format);
    }
    if c.version != VERSION {
        bail!("checkpoint version {} is not supported (expected {VERSION})", c.version);
    }
    Ok(PolicyParams::from_values(c.config, c.values)?)
}

pub fn save(params: &PolicyParams, path: &Path) -> Result<()> {
    fs::write(path, to_json(params)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<PolicyParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_json(&text).with_context(|| format!("loading {}", path.display()))
}
