//! Experiment configuration file.
//!
//! ```toml
//! [sim]
//! preset = "protective"   # or "neutral" (default)
//! dim = 50                # required
//! n_combinations = 5000   # required
//! n_patterns = 5          # required
//!
//! [miner]
//! horizon = 2000          # required
//! warmup = 500            # required
//! hidden_layers = [64]
//!
//! [miner.train]
//! epochs = 100
//!
//! [de]
//! population_size = 32
//!
//! [eval]
//! every = 200
//! seeds = [0, 1, 2]
//! subsample = 1000        # optional
//! ```
//!
//! Anything not given takes its library default. A run manifest
//! (`manifest.json`) is accepted in place of a config file and reproduces
//! the recorded run.

use std::path::Path;

use pipmine_core::miner::MinerConfig;
use pipmine_core::simgen::{Preset, SimConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluation cadence in plays after warm-up.
    pub every: usize,
    pub seeds: Vec<u64>,
    /// Bucket width of the relative-risk histogram.
    pub histogram_width: f64,
    /// Worker threads for multi-seed commands; all cores when absent.
    pub workers: Option<usize>,
    /// Classify only this many dataset entries per seed, drawn uniformly.
    /// The whole dataset when absent.
    pub subsample: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every: 200,
            seeds: vec![0],
            histogram_width: 0.1,
            workers: None,
            subsample: None,
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub sim: SimConfig,
    pub miner: MinerConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim
            .validate()
            .map_err(|e| CliError::Config(format!("[sim]: {e}")))?;
        self.miner
            .validate()
            .map_err(|e| CliError::Config(format!("[miner]: {e}")))?;
        if self.eval.every == 0 {
            return Err(CliError::Config("[eval]: `every` must be >= 1".into()));
        }
        if self.eval.seeds.is_empty() {
            return Err(CliError::Config("[eval]: `seeds` must not be empty".into()));
        }
        if self.eval.subsample == Some(0) {
            return Err(CliError::Config("[eval]: `subsample` must be >= 1".into()));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.eval.histogram_width > 0.0) {
            return Err(CliError::Config("[eval]: `histogram_width` must be > 0".into()));
        }
        if self.eval.workers == Some(0) {
            return Err(CliError::Config("[eval]: `workers` must be >= 1".into()));
        }
        Ok(())
    }
}

fn config_err(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

fn take_section(doc: &mut Table, name: &str) -> Result<Table> {
    match doc.remove(name) {
        None => Ok(Table::new()),
        Some(Value::Table(t)) => Ok(t),
        Some(_) => Err(config_err(format!("`{name}` must be a table"))),
    }
}

fn required_usize(table: &Table, section: &str, key: &str) -> Result<usize> {
    let v = table
        .get(key)
        .ok_or_else(|| config_err(format!("missing required field `{section}.{key}`")))?;
    v.as_integer()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| config_err(format!("`{section}.{key}` must be a non-negative integer")))
}

fn parse_preset(name: &str) -> Result<Preset> {
    match name {
        "neutral" => Ok(Preset::Neutral),
        "protective" => Ok(Preset::Protective),
        other => Err(config_err(format!(
            "`sim.preset` must be \"neutral\" or \"protective\", found {other:?}"
        ))),
    }
}

/// Parses config text. `preset` overrides `sim.preset`; explicit `[sim]`
/// keys still win over the preset's values.
pub fn parse(text: &str, preset: Option<Preset>) -> Result<ExperimentConfig> {
    let mut doc: Table = text.parse().map_err(|e: toml::de::Error| config_err(e))?;
    let mut sim = take_section(&mut doc, "sim")?;
    let mut miner = take_section(&mut doc, "miner")?;
    let de = doc.remove("de");
    let eval = take_section(&mut doc, "eval")?;
    if let Some(key) = doc.keys().next() {
        return Err(config_err(format!(
            "unknown section or key `{key}` (expected [sim], [miner], [de], [eval])"
        )));
    }

    let file_preset = match sim.remove("preset") {
        None => None,
        Some(Value::String(s)) => Some(parse_preset(&s)?),
        Some(_) => return Err(config_err("`sim.preset` must be a string")),
    };
    let preset = preset.or(file_preset).unwrap_or(Preset::Neutral);
    let base = SimConfig::preset(
        preset,
        required_usize(&sim, "sim", "dim")?,
        required_usize(&sim, "sim", "n_combinations")?,
        required_usize(&sim, "sim", "n_patterns")?,
    );
    let mut merged = Table::try_from(&base).map_err(config_err)?;
    merged.extend(sim);
    let sim: SimConfig = Value::Table(merged)
        .try_into()
        .map_err(|e| config_err(format!("[sim]: {e}")))?;

    required_usize(&miner, "miner", "horizon")?;
    required_usize(&miner, "miner", "warmup")?;
    if let Some(de) = de {
        if miner.contains_key("de") {
            return Err(config_err("DE parameters given both in [de] and [miner.de]"));
        }
        miner.insert("de".into(), de);
    }
    let miner: MinerConfig = Value::Table(miner)
        .try_into()
        .map_err(|e| config_err(format!("[miner]: {e}")))?;
    let eval: EvalConfig = Value::Table(eval)
        .try_into()
        .map_err(|e| config_err(format!("[eval]: {e}")))?;

    let cfg = ExperimentConfig {
        preset,
        sim,
        miner,
        eval,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a TOML config, or the resolved config recorded in a run manifest
/// when the file ends in `.json`.
pub fn load(path: &Path, preset: Option<Preset>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: crate::manifest::RunManifest =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = manifest.config;
        if let Some(p) = preset {
            if p != cfg.preset {
                return Err(config_err("--preset cannot change the preset recorded in a manifest"));
            }
        }
        cfg.eval.seeds = manifest.seeds;
        cfg.validate()?;
        return Ok(cfg);
    }
    parse(&text, preset).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
