//! Classification metrics for a mined ensemble, the random-sampling
//! baseline and multi-seed aggregation.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};

use crate::claims::{HistoricalDataset, MiningSample};
use crate::miner::{self, EnsembleModel, MinerConfig, MiningResult};
use crate::simgen::{self, DangerousPattern, SimConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub step: usize,
    /// `tp / (tp + fp)`, or 1.0 when nothing is flagged.
    pub precision: f64,
    /// `tp / (tp + fn)`, or 0.0 when the dataset has no positives.
    pub recall: f64,
    /// Fraction of dangerous patterns flagged.
    pub ratio_patterns: f64,
    /// Fraction of true-positive detections absent from the mined samples.
    pub ratio_unseen: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Set when nothing was flagged and `precision` holds the convention.
    pub no_predictions: bool,
}

pub type MetricFn = fn(&EvalReport) -> f64;

/// Names and accessors of the real-valued metrics, in report order.
pub const METRICS: [(&str, MetricFn); 4] = [
    ("precision", |r| r.precision),
    ("recall", |r| r.recall),
    ("ratio_patterns", |r| r.ratio_patterns),
    ("ratio_unseen", |r| r.ratio_unseen),
];

/// Builds a report from per-entry and per-pattern flags.
pub fn report_from_flags(
    step: usize,
    data: &HistoricalDataset,
    data_flags: &[bool],
    pattern_flags: &[bool],
    mined: &[MiningSample],
    threshold: f64,
) -> EvalReport {
    let mined_set: BTreeSet<&[u32]> = mined.iter().map(|s| s.combination.drugs()).collect();
    let (mut tp, mut fp, mut fn_, mut unseen) = (0, 0, 0, 0);
    for ((combo, rr), &flag) in data.entries().iter().zip(data_flags) {
        let positive = *rr > threshold;
        match (flag, positive) {
            (true, true) => {
                tp += 1;
                if !mined_set.contains(combo.drugs()) {
                    unseen += 1;
                }
            }
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let no_predictions = tp + fp == 0;
    EvalReport {
        step,
        precision: if no_predictions { 1.0 } else { ratio(tp, tp + fp) },
        recall: ratio(tp, tp + fn_),
        ratio_patterns: ratio(pattern_flags.iter().filter(|&&f| f).count(), pattern_flags.len()),
        ratio_unseen: ratio(unseen, tp),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        no_predictions,
    }
}

/// Classifies every dataset entry and every pattern with `ensemble`.
/// Ground truth is `true_rr > threshold`.
pub fn evaluate(
    ensemble: &EnsembleModel,
    data: &HistoricalDataset,
    patterns: &[DangerousPattern],
    mined: &[MiningSample],
    threshold: f64,
) -> Result<EvalReport> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let data_flags = data
        .entries()
        .iter()
        .map(|(c, _)| ensemble.classify(c))
        .collect::<Result<Vec<_>>>()?;
    let pattern_flags = patterns
        .iter()
        .map(|p| ensemble.classify(&p.combination))
        .collect::<Result<Vec<_>>>()?;
    let step = ensemble.members.last().map_or(0, |s| s.step);
    Ok(report_from_flags(
        step,
        data,
        &data_flags,
        &pattern_flags,
        mined,
        threshold,
    ))
}

/// Uniform sample of `size` entries without replacement, kept in dataset
/// order. The whole dataset is returned when `size >= data.len()`.
pub fn evaluation_subset<R: Rng + ?Sized>(
    data: &HistoricalDataset,
    size: usize,
    rng: &mut R,
) -> Result<HistoricalDataset> {
    if size == 0 {
        return Err(Error::InvalidConfig("evaluation subset must be non-empty"));
    }
    if size >= data.len() {
        return Ok(data.clone());
    }
    let mut idx = rand::seq::index::sample(rng, data.len(), size).into_vec();
    idx.sort_unstable();
    data.select(&idx)
}

/// Evaluation steps after warm-up: every `every` plays, plus the horizon.
pub fn evaluation_steps(warmup: usize, horizon: usize, every: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = if every == 0 {
        Vec::new()
    } else {
        (1..)
            .map(|k| warmup + k * every)
            .take_while(|&s| s <= horizon)
            .collect()
    };
    if steps.last() != Some(&horizon) {
        steps.push(horizon);
    }
    steps
}

/// Reports for the growing ensemble and for the latest single member at
/// each of `steps` (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointReports {
    pub ensemble: Vec<EvalReport>,
    pub single: Vec<EvalReport>,
}

/// Evaluates a finished run at each checkpoint using only the members and
/// samples available at that step. Ensemble flags are cached between
/// checkpoints since adding members can only add flags.
pub fn evaluate_checkpoints(
    result: &MiningResult,
    data: &HistoricalDataset,
    patterns: &[DangerousPattern],
    threshold: f64,
    steps: &[usize],
) -> Result<CheckpointReports> {
    let ens = &result.ensemble;
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let (k, thr) = (ens.lcb_multiplier, ens.rr_threshold);
    let mut data_flags = vec![false; data.len()];
    let mut pattern_flags = vec![false; patterns.len()];
    let mut next_member = 0;
    let mut out = CheckpointReports {
        ensemble: Vec::with_capacity(steps.len()),
        single: Vec::with_capacity(steps.len()),
    };
    for &step in steps {
        while next_member < ens.members.len() && ens.members[next_member].step <= step {
            let member = &ens.members[next_member];
            for (flag, (combo, _)) in data_flags.iter_mut().zip(data.entries()) {
                if !*flag {
                    *flag = member.votes(combo, k, thr)?;
                }
            }
            for (flag, p) in pattern_flags.iter_mut().zip(patterns) {
                if !*flag {
                    *flag = member.votes(&p.combination, k, thr)?;
                }
            }
            next_member += 1;
        }
        if next_member == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let mined = &result.samples[..step.min(result.samples.len())];
        out.ensemble.push(report_from_flags(
            step,
            data,
            &data_flags,
            &pattern_flags,
            mined,
            threshold,
        ));
        let latest = &ens.members[next_member - 1];
        let single_data = data
            .entries()
            .iter()
            .map(|(c, _)| latest.votes(c, k, thr))
            .collect::<Result<Vec<_>>>()?;
        let single_patterns = patterns
            .iter()
            .map(|p| latest.votes(&p.combination, k, thr))
            .collect::<Result<Vec<_>>>()?;
        out.single.push(report_from_flags(
            step,
            data,
            &single_data,
            &single_patterns,
            mined,
            threshold,
        ));
    }
    Ok(out)
}

/// Distinct combinations with `true_rr > threshold` among `samples`.
pub fn distinct_positives(samples: &[MiningSample], data: &HistoricalDataset, threshold: f64) -> usize {
    samples
        .iter()
        .filter_map(|s| data.position(&s.combination))
        .filter(|&i| data.true_rr(i) > threshold)
        .collect::<BTreeSet<_>>()
        .len()
}

/// Samples `budget` entries uniformly with replacement and counts the
/// distinct ones with `true_rr > threshold`.
pub fn random_baseline<R: Rng + ?Sized>(data: &HistoricalDataset, budget: usize, threshold: f64, rng: &mut R) -> usize {
    if data.is_empty() {
        return 0;
    }
    let mut hit = BTreeSet::new();
    for _ in 0..budget {
        let i = rng.random_range(0..data.len());
        if data.true_rr(i) > threshold {
            hit.insert(i);
        }
    }
    hit.len()
}

/// Expected value of [`random_baseline`]: `P (1 - (1 - 1/n)^budget)`.
pub fn random_baseline_expectation(positives: usize, n: usize, budget: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    positives as f64 * (1.0 - libm::pow(1.0 - 1.0 / n as f64, budget as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: usize,
    pub metric: &'static str,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-step mean and std of each metric across seeds. All series must share
/// the same steps.
pub fn aggregate(series: &[Vec<EvalReport>]) -> Result<Vec<AggregateRow>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    if series.iter().any(|s| s.len() != first.len()) {
        return Err(Error::InvalidConfig("series lengths differ across seeds"));
    }
    let mut rows = Vec::new();
    for (t, report) in first.iter().enumerate() {
        if series.iter().any(|s| s[t].step != report.step) {
            return Err(Error::InvalidConfig("series steps differ across seeds"));
        }
        for (name, get) in METRICS {
            let values: Vec<f64> = series.iter().map(|s| get(&s[t])).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            rows.push(AggregateRow {
                step: report.step,
                metric: name,
                mean,
                std: libm::sqrt(var),
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok(rows)
}

/// Outcome of one seeded generate, mine and evaluate cycle.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub data: HistoricalDataset,
    pub patterns: Vec<DangerousPattern>,
    pub result: MiningResult,
    pub reports: CheckpointReports,
    /// Dataset entries with `true_rr` above the threshold.
    pub positives: usize,
    /// Distinct positives among the mined samples.
    pub mined_positives: usize,
    /// Distinct positives from uniform sampling with the same budget.
    pub baseline_positives: usize,
}

/// One repetition: the dataset, the run, the optional evaluation subset and
/// the baseline all draw from a single generator seeded with `seed`, in
/// that order. With `subsample` set, checkpoint reports cover that many
/// dataset entries instead of all of them. The `seed` fields of `sim` and
/// `miner` are overridden.
pub fn run_seed<R: Rng + SeedableRng>(
    sim: &SimConfig,
    miner_cfg: &MinerConfig,
    eval_every: usize,
    subsample: Option<usize>,
    seed: u64,
) -> Result<SeedRun> {
    let sim = SimConfig { seed, ..sim.clone() };
    let miner_cfg = MinerConfig {
        seed,
        ..miner_cfg.clone()
    };
    let mut rng = R::seed_from_u64(seed);
    let (data, patterns) = simgen::generate_dataset(&sim, &mut rng)?;
    let result = miner::run(&data, &miner_cfg, &mut rng)?;
    let thr = miner_cfg.rr_threshold;
    let steps = evaluation_steps(miner_cfg.warmup, miner_cfg.horizon, eval_every);
    let reports = match subsample {
        Some(n) => {
            let subset = evaluation_subset(&data, n, &mut rng)?;
            evaluate_checkpoints(&result, &subset, &patterns, thr, &steps)?
        }
        None => evaluate_checkpoints(&result, &data, &patterns, thr, &steps)?,
    };
    let baseline_positives = random_baseline(&data, miner_cfg.horizon, thr, &mut rng);
    Ok(SeedRun {
        seed,
        positives: data.count_above(thr),
        mined_positives: distinct_positives(&result.samples, &data, thr),
        baseline_positives,
        data,
        patterns,
        result,
        reports,
    })
}

/// Independent repetitions over `seeds`, run one after another, and the
/// aggregate of their ensemble reports.
pub fn run_experiment<R: Rng + SeedableRng>(
    sim: &SimConfig,
    miner_cfg: &MinerConfig,
    eval_every: usize,
    subsample: Option<usize>,
    seeds: &[u64],
) -> Result<(Vec<SeedRun>, Vec<AggregateRow>)> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required"));
    }
    let runs = seeds
        .iter()
        .map(|&s| run_seed::<R>(sim, miner_cfg, eval_every, subsample, s))
        .collect::<Result<Vec<_>>>()?;
    let series: Vec<Vec<EvalReport>> = runs.iter().map(|r| r.reports.ensemble.clone()).collect();
    let agg = aggregate(&series)?;
    Ok((runs, agg))
}
