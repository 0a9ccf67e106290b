//! The `generate`, `mine`, `evaluate` and `report` subcommands.
//!
//! Every command reads all of its inputs before writing anything, writes
//! each file atomically and finishes with a `manifest.json` in its output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use pipmine_core::claims::HistoricalDataset;
use pipmine_core::evalkit::{self, EvalReport};
use pipmine_core::miner::{EnsembleModel, MiningResult};
use pipmine_core::simgen::{self, Preset};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{self, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, write_atomic};
use crate::harness::{self, worker_count};
use crate::manifest::RunManifest;

pub const DATASET_FILE: &str = "dataset.txt";
pub const PATTERNS_FILE: &str = "patterns.txt";
pub const HISTOGRAM_FILE: &str = "rr_histogram.csv";
pub const SAMPLES_FILE: &str = "samples.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const ENSEMBLE_DIR: &str = "ensemble";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SINGLE_METRICS_FILE: &str = "single_metrics.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const PLOTS_DIR: &str = "plots";

/// Mixed into the seed for the evaluation subset so it does not share a
/// stream with mining.
const SUBSET_SALT: u64 = 0x0e7a_1500;

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub preset: Option<Preset>,
}

fn load(config_path: &Path, ov: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = config::load(config_path, ov.preset)?;
    if let Some(seed) = ov.seed {
        cfg.eval.seeds = vec![seed];
    }
    if ov.workers.is_some() {
        cfg.eval.workers = ov.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn seed_dir_name(seed: u64) -> String {
    format!("seed-{seed}")
}

fn rel(parts: &[&str]) -> String {
    parts.join("/")
}

pub fn histogram_csv(data: &HistoricalDataset, width: f64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bucket", "count"])?;
    for (centre, count) in simgen::rr_histogram(data, width) {
        w.write_record([format!("{centre:.4}"), count.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Writes a synthetic dataset, its patterns and the RR histogram. The seed
/// is `--seed` when given, else `sim.seed`.
pub fn cmd_generate(config_path: &Path, out: &Path, ov: &Overrides) -> Result<RunManifest> {
    let mut cfg = load(
        config_path,
        &Overrides {
            seed: None,
            ..ov.clone()
        },
    )?;
    let seed = ov.seed.unwrap_or(cfg.sim.seed);
    cfg.sim.seed = seed;
    let mut manifest = RunManifest::new("generate", &cfg, &[seed]);
    manifest.input("config", config_path);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, patterns) = manifest.time("generate", || simgen::generate_dataset(&cfg.sim, &mut rng))?;
    let histogram = histogram_csv(&data, cfg.eval.histogram_width)?;
    formats::write_dataset(&out.join(DATASET_FILE), &data)?;
    write_atomic(&out.join(PATTERNS_FILE), formats::render_patterns(&patterns).as_bytes())?;
    write_atomic(&out.join(HISTOGRAM_FILE), histogram.as_bytes())?;
    manifest.artifacts = vec![DATASET_FILE.into(), PATTERNS_FILE.into(), HISTOGRAM_FILE.into()];
    manifest.write(out)?;
    Ok(manifest)
}

/// Mines `dataset_path` once per seed into `out/seed-<s>/`.
pub fn cmd_mine(config_path: &Path, dataset_path: &Path, out: &Path, ov: &Overrides) -> Result<RunManifest> {
    let cfg = load(config_path, ov)?;
    let data = formats::read_dataset(dataset_path)?;
    let seeds = cfg.eval.seeds.clone();
    let mut manifest = RunManifest::new("mine", &cfg, &seeds);
    manifest.input("config", config_path);
    manifest.input("dataset", dataset_path);
    let workers = worker_count(cfg.eval.workers);
    let results = manifest.time("mine", || harness::mine_seeds(&data, &cfg.miner, &seeds, workers))?;
    for (seed, result) in seeds.iter().zip(&results) {
        let name = seed_dir_name(*seed);
        let dir = out.join(&name);
        write_atomic(
            &dir.join(SAMPLES_FILE),
            formats::render_samples(data.dim(), &result.samples).as_bytes(),
        )?;
        write_atomic(&dir.join(TRACE_FILE), formats::render_trace(&result.trace)?.as_bytes())?;
        formats::write_ensemble(&dir.join(ENSEMBLE_DIR), &result.ensemble.members)?;
        manifest.artifacts.push(rel(&[&name, SAMPLES_FILE]));
        manifest.artifacts.push(rel(&[&name, TRACE_FILE]));
        manifest.artifacts.push(rel(&[&name, ENSEMBLE_DIR]));
    }
    manifest.write(out)?;
    Ok(manifest)
}

/// Seeds of the `seed-<s>` directories under `runs`, ascending.
pub fn discover_seeds(runs: &Path) -> Result<Vec<u64>> {
    let mut seeds: Vec<u64> = fs::read_dir(runs)
        .map_err(|e| CliError::io(runs, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix("seed-")?.parse().ok())
        .collect();
    seeds.sort_unstable();
    if seeds.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no seed-<n> run directories",
            runs.display()
        )));
    }
    Ok(seeds)
}

/// Loads the mined samples and ensemble of one run directory and checks
/// them against the dataset.
pub fn load_run(dir: &Path, data: &HistoricalDataset, cfg: &ExperimentConfig) -> Result<MiningResult> {
    let members = formats::read_ensemble(&dir.join(ENSEMBLE_DIR))?;
    let ensemble = EnsembleModel::new(members, cfg.miner.rr_threshold, cfg.miner.lcb_multiplier);
    let ens_dim = ensemble.dim().unwrap_or(0);
    if ens_dim != data.dim() {
        return Err(CliError::Data(format!(
            "{}: ensemble dimension {ens_dim} does not match dataset dimension {}",
            dir.display(),
            data.dim()
        )));
    }
    let samples_path = dir.join(SAMPLES_FILE);
    let samples = formats::read_samples(&samples_path)?;
    if let Some(s) = samples.iter().find(|s| s.combination.dim() != data.dim()) {
        return Err(CliError::Data(format!(
            "{}: samples dimension {} does not match dataset dimension {}",
            samples_path.display(),
            s.combination.dim(),
            data.dim()
        )));
    }
    if samples.len() != cfg.miner.horizon {
        return Err(CliError::Data(format!(
            "{}: {} samples but the configured horizon is {}",
            samples_path.display(),
            samples.len(),
            cfg.miner.horizon
        )));
    }
    Ok(MiningResult {
        samples,
        ensemble,
        trace: Vec::new(),
    })
}

fn write_reports(
    out: &Path,
    seeds: &[u64],
    ensemble: &[&[EvalReport]],
    single: &[&[EvalReport]],
    manifest: &mut RunManifest,
) -> Result<()> {
    let series: Vec<Vec<EvalReport>> = ensemble.iter().map(|s| s.to_vec()).collect();
    let aggregate = harness::aggregate_csv(&evalkit::aggregate(&series)?)?;
    let ens: Vec<(u64, &[EvalReport])> = seeds.iter().copied().zip(ensemble.iter().copied()).collect();
    let one: Vec<(u64, &[EvalReport])> = seeds.iter().copied().zip(single.iter().copied()).collect();
    write_atomic(&out.join(METRICS_FILE), harness::metrics_csv(&ens)?.as_bytes())?;
    write_atomic(&out.join(SINGLE_METRICS_FILE), harness::metrics_csv(&one)?.as_bytes())?;
    write_atomic(&out.join(AGGREGATE_FILE), aggregate.as_bytes())?;
    manifest
        .artifacts
        .extend([METRICS_FILE.into(), SINGLE_METRICS_FILE.into(), AGGREGATE_FILE.into()]);
    for name in harness::write_plots(&aggregate, &out.join(PLOTS_DIR))? {
        manifest.artifacts.push(rel(&[PLOTS_DIR, &name]));
    }
    Ok(())
}

/// Evaluates every `seed-<s>` run under `runs` (or only `--seed`) at the
/// configured cadence.
pub fn cmd_evaluate(
    config_path: &Path,
    dataset_path: &Path,
    patterns_path: &Path,
    runs: &Path,
    out: &Path,
    ov: &Overrides,
) -> Result<RunManifest> {
    let mut cfg = load(
        config_path,
        &Overrides {
            seed: None,
            ..ov.clone()
        },
    )?;
    let data = formats::read_dataset(dataset_path)?;
    let patterns = formats::read_patterns(patterns_path, data.dim())?;
    let seeds = match ov.seed {
        Some(s) => vec![s],
        None => discover_seeds(runs)?,
    };
    cfg.eval.seeds = seeds.clone();
    let mut manifest = RunManifest::new("evaluate", &cfg, &seeds);
    manifest.input("config", config_path);
    manifest.input("dataset", dataset_path);
    manifest.input("patterns", patterns_path);
    manifest.input("runs", runs);
    let steps = evalkit::evaluation_steps(cfg.miner.warmup, cfg.miner.horizon, cfg.eval.every);
    let workers = worker_count(cfg.eval.workers);
    let reports = manifest.time("evaluate", || {
        harness::per_seed(&seeds, workers, |seed| {
            let result = load_run(&runs.join(seed_dir_name(seed)), &data, &cfg)?;
            let subset = match cfg.eval.subsample {
                Some(n) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SUBSET_SALT);
                    Some(evalkit::evaluation_subset(&data, n, &mut rng)?)
                }
                None => None,
            };
            Ok(evalkit::evaluate_checkpoints(
                &result,
                subset.as_ref().unwrap_or(&data),
                &patterns,
                cfg.miner.rr_threshold,
                &steps,
            )?)
        })
    })?;
    let ensemble: Vec<&[EvalReport]> = reports.iter().map(|r| r.ensemble.as_slice()).collect();
    let single: Vec<&[EvalReport]> = reports.iter().map(|r| r.single.as_slice()).collect();
    write_reports(out, &seeds, &ensemble, &single, &mut manifest)?;
    manifest.write(out)?;
    Ok(manifest)
}

/// Full multi-seed experiment: a fresh dataset per seed, mining,
/// evaluation, the random baseline and plots.
pub fn cmd_report(config_path: &Path, out: &Path, ov: &Overrides) -> Result<RunManifest> {
    let cfg = load(config_path, ov)?;
    let seeds = cfg.eval.seeds.clone();
    let mut manifest = RunManifest::new("report", &cfg, &seeds);
    manifest.input("config", config_path);
    let workers = worker_count(cfg.eval.workers);
    let (runs, _) = manifest.time("experiment", || harness::run_experiment(&cfg, &seeds, workers))?;
    for run in &runs {
        let name = seed_dir_name(run.seed);
        let dir = out.join(&name);
        formats::write_dataset(&dir.join(DATASET_FILE), &run.data)?;
        write_atomic(
            &dir.join(PATTERNS_FILE),
            formats::render_patterns(&run.patterns).as_bytes(),
        )?;
        write_atomic(
            &dir.join(SAMPLES_FILE),
            formats::render_samples(run.data.dim(), &run.result.samples).as_bytes(),
        )?;
        write_atomic(
            &dir.join(TRACE_FILE),
            formats::render_trace(&run.result.trace)?.as_bytes(),
        )?;
        for file in [DATASET_FILE, PATTERNS_FILE, SAMPLES_FILE, TRACE_FILE] {
            manifest.artifacts.push(rel(&[&name, file]));
        }
    }
    write_atomic(&out.join(BASELINE_FILE), harness::baseline_csv(&runs)?.as_bytes())?;
    manifest.artifacts.push(BASELINE_FILE.into());
    let ensemble: Vec<&[EvalReport]> = runs.iter().map(|r| r.reports.ensemble.as_slice()).collect();
    let single: Vec<&[EvalReport]> = runs.iter().map(|r| r.reports.single.as_slice()).collect();
    write_reports(out, &seeds, &ensemble, &single, &mut manifest)?;
    manifest.write(out)?;
    Ok(manifest)
}

/// Re-renders the plots of an earlier `evaluate` or `report` output from
/// its aggregate CSV.
pub fn cmd_replot(from: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let path = from.join(AGGREGATE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let dir = out.join(PLOTS_DIR);
    Ok(harness::write_plots(&text, &dir)?
        .into_iter()
        .map(|n| dir.join(n))
        .collect())
}
