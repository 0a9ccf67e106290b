//! Multi-seed runs and their CSV outputs.

use std::path::Path;

use pipmine_core::claims::HistoricalDataset;
use pipmine_core::evalkit::{self, AggregateRow, EvalReport, SeedRun};
use pipmine_core::miner::{self, MinerConfig, MiningResult};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::formats::write_atomic;
use crate::plot::{metric_svg, BandPoint};

/// Worker count: the requested one, else the number of logical cores.
pub fn worker_count(requested: Option<usize>) -> usize {
    requested
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

/// Runs `f` over `seeds` on `workers` threads, keeping seed order.
pub fn per_seed<T: Send>(seeds: &[u64], workers: usize, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    if workers <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

/// Mines `data` once per seed, each run with its own ChaCha8 generator.
pub fn mine_seeds(
    data: &HistoricalDataset,
    cfg: &MinerConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<MiningResult>> {
    per_seed(seeds, workers, |seed| {
        let cfg = MinerConfig { seed, ..cfg.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(miner::run(data, &cfg, &mut rng)?)
    })
}

/// Generate, mine and evaluate once per seed, then aggregate the ensemble
/// reports.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<(Vec<SeedRun>, Vec<AggregateRow>)> {
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    let runs = per_seed(seeds, workers, |seed| {
        Ok(evalkit::run_seed::<ChaCha8Rng>(
            &cfg.sim,
            &cfg.miner,
            cfg.eval.every,
            cfg.eval.subsample,
            seed,
        )?)
    })?;
    let series: Vec<Vec<EvalReport>> = runs.iter().map(|r| r.reports.ensemble.clone()).collect();
    let agg = evalkit::aggregate(&series)?;
    Ok((runs, agg))
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

pub const METRICS_HEADER: [&str; 10] = [
    "seed",
    "step",
    "tp",
    "fp",
    "fn",
    "precision",
    "recall",
    "ratio_patterns",
    "ratio_unseen",
    "no_predictions",
];

/// One row per (seed, evaluation step).
pub fn metrics_csv(series: &[(u64, &[EvalReport])]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for (seed, reports) in series {
        for r in *reports {
            w.write_record([
                seed.to_string(),
                r.step.to_string(),
                r.true_positives.to_string(),
                r.false_positives.to_string(),
                r.false_negatives.to_string(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.ratio_patterns.to_string(),
                r.ratio_unseen.to_string(),
                u8::from(r.no_predictions).to_string(),
            ])?;
        }
    }
    csv_string(w)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "metric", "mean", "std"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.metric.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
        ])?;
    }
    csv_string(w)
}

/// Per-seed mined vs random-sampling positives.
pub fn baseline_csv(runs: &[SeedRun]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "positives", "mined_positives", "baseline_positives"])?;
    for r in runs {
        w.write_record([
            r.seed.to_string(),
            r.positives.to_string(),
            r.mined_positives.to_string(),
            r.baseline_positives.to_string(),
        ])?;
    }
    csv_string(w)
}

/// Series per metric read back from an aggregate CSV, in first-seen
/// order.
pub fn parse_aggregate_csv(text: &str) -> Result<Vec<(String, Vec<BandPoint>)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out: Vec<(String, Vec<BandPoint>)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CliError::Data(format!("aggregate csv row {}: bad {what}", i + 2));
        let metric = rec.get(1).ok_or_else(|| bad("metric"))?.to_string();
        let point = BandPoint {
            step: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("step"))?,
            mean: rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("mean"))?,
            std: rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("std"))?,
        };
        match out.iter_mut().find(|(m, _)| *m == metric) {
            Some((_, pts)) => pts.push(point),
            None => out.push((metric, vec![point])),
        }
    }
    Ok(out)
}

/// Writes one `<metric>.svg` per metric of an aggregate CSV into `dir` and
/// returns the file names.
pub fn write_plots(aggregate_csv: &str, dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for (metric, points) in parse_aggregate_csv(aggregate_csv)? {
        let name = format!("{metric}.svg");
        write_atomic(&dir.join(&name), metric_svg(&metric, &points).as_bytes())?;
        names.push(name);
    }
    Ok(names)
}
