//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero when any criterion fails. The full-scale run (criterion 9) only
//! runs when `--ignored` or `--include-ignored` is passed.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use pipmine::commands::{self, Overrides};
use pipmine::config::{EvalConfig, ExperimentConfig};
use pipmine::harness;
use pipmine::pipmine_core::claims::{DrugCombination, Exposure, ExposureRow, HistoricalDataset};
use pipmine::pipmine_core::devolution::{de_optimize, DeConfig};
use pipmine::pipmine_core::evalkit::SeedRun;
use pipmine::pipmine_core::miner::{EnsembleModel, MinerConfig};
use pipmine::pipmine_core::neuralnet::Mlp;
use pipmine::pipmine_core::simgen::{Preset, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn print_line(id: &str, name: &str, budget: Duration, took: Duration, o: Outcome) -> bool {
    let in_time = took <= budget;
    let pass = o.pass && in_time;
    println!(
        "[{}] {id} {name}: {} ({:.1}s, budget {}s{})",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

fn report(id: &str, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    print_line(id, name, budget, start.elapsed(), o)
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=10);
        let h = rng.random_range(1..=8);
        let net = Mlp::new(&[d, h, 1], &mut rng).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = net.param_gradient(&x).unwrap();
        let mut probe = net.clone();
        let step = 1e-6;
        let fd: Vec<f64> = (0..net.param_count())
            .map(|i| {
                let t = net.parameters()[i];
                probe.parameters_mut()[i] = t + step;
                let up = probe.forward(&x).unwrap();
                probe.parameters_mut()[i] = t - step;
                let down = probe.forward(&x).unwrap();
                probe.parameters_mut()[i] = t;
                (up - down) / (2.0 * step)
            })
            .collect();
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let scale = norm(&mut g.iter().copied()).max(norm(&mut fd.iter().copied()));
        if scale > 0.0 {
            worst = worst.max(norm(&mut g.iter().zip(&fd).map(|(a, b)| a - b)) / scale);
        }
    }
    outcome(worst < 1e-4, format!("worst relative error {worst:.2e} over 100 nets"))
}

fn rr_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut bad) = (0usize, 0usize);
    for _ in 0..1000 {
        let dim = rng.random_range(1..=6);
        let rows: Vec<ExposureRow> = (0..rng.random_range(1..=80))
            .map(|_| {
                let bits: Vec<u8> = (0..dim).map(|_| u8::from(rng.random_bool(0.35))).collect();
                ExposureRow {
                    combination: DrugCombination::from_multi_hot(&bits),
                    outcome: rng.random_bool(0.3),
                }
            })
            .collect();
        let data = HistoricalDataset::from_exposure_rows(dim, rows.clone(), Exposure::Exact).unwrap();
        let distinct: BTreeSet<Vec<u8>> = rows.iter().map(|r| r.combination.to_multi_hot()).collect();
        for bits in distinct {
            let (mut a, mut b, mut c, mut d) = (0u128, 0u128, 0u128, 0u128);
            for r in &rows {
                match (r.combination.to_multi_hot() == bits, r.outcome) {
                    (true, true) => a += 1,
                    (true, false) => b += 1,
                    (false, true) => c += 1,
                    (false, false) => d += 1,
                }
            }
            let combo = DrugCombination::from_multi_hot(&bits);
            match data.position(&combo) {
                None => bad += usize::from(c != 0),
                Some(i) => {
                    // rr == num / den exactly, up to the final rounding.
                    let (num, den) = (a * (c + d), c * (a + b));
                    let rr = data.true_rr(i);
                    let err = (rr * den as f64 - num as f64).abs();
                    bad += usize::from(c == 0 || err > 1e-12 * (num as f64).max(1.0));
                }
            }
            checked += 1;
        }
    }
    outcome(
        bad == 0,
        format!("{checked} combinations over 1000 datasets, {bad} mismatches"),
    )
}

fn de_sanity() -> Outcome {
    let cfg = DeConfig::default();
    let (mut ones, mut monotone) = (0, true);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = de_optimize(&cfg, 16, |x| x.iter().map(|&b| b as f64).sum(), &mut rng).unwrap();
        ones += usize::from(out.best.iter().all(|&b| b == 1));
        monotone &= out.best_history.windows(2).all(|w| w[1] >= w[0]);
    }
    outcome(
        ones >= 95 && monotone,
        format!("all-ones in {ones}/100 seeds, monotone best: {monotone}"),
    )
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig {
        preset: Preset::Protective,
        sim: SimConfig::protective(50, 5000, 5),
        miner: MinerConfig {
            horizon: 2000,
            warmup: 500,
            hidden_layers: vec![8],
            noise_sigma: 0.1,
            ..MinerConfig::default()
        },
        eval: EvalConfig {
            every: 500,
            seeds: (0..20).collect(),
            ..EvalConfig::default()
        },
    }
}

/// Final-step precision and recall recomputed from `classify` calls.
fn confusion(ens: &EnsembleModel, data: &HistoricalDataset, thr: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (c, rr) in data.entries() {
        match (ens.classify(c).unwrap(), *rr > thr) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    (precision, recall)
}

struct Desk {
    runs: Vec<SeedRun>,
    baselines: Vec<usize>,
    mined: Vec<usize>,
    final_ens: Vec<(f64, f64)>,
    final_single: Vec<(f64, f64)>,
    elapsed: Duration,
}

fn desk_runs() -> Desk {
    let cfg = desk_config();
    let start = Instant::now();
    let (runs, _) = harness::run_experiment(&cfg, &cfg.eval.seeds, harness::worker_count(None)).unwrap();
    let thr = cfg.miner.rr_threshold;
    let mut desk = Desk {
        runs: Vec::new(),
        baselines: Vec::new(),
        mined: Vec::new(),
        final_ens: Vec::new(),
        final_single: Vec::new(),
        elapsed: Duration::ZERO,
    };
    for run in runs {
        // Independent random-sampling oracle with its own generator.
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed ^ 0x5eed_ba5e);
        let hits: BTreeSet<usize> = (0..cfg.miner.horizon)
            .map(|_| rng.random_range(0..run.data.len()))
            .filter(|&i| run.data.true_rr(i) > thr)
            .collect();
        desk.baselines.push(hits.len());
        let mined: BTreeSet<&[u32]> = run
            .result
            .samples
            .iter()
            .filter(|s| {
                run.data
                    .entries()
                    .iter()
                    .any(|(c, rr)| c == &s.combination && *rr > thr)
            })
            .map(|s| s.combination.drugs())
            .collect();
        desk.mined.push(mined.len());
        let ens = &run.result.ensemble;
        desk.final_ens.push(confusion(ens, &run.data, thr));
        desk.final_single
            .push(confusion(&ens.latest(cfg.miner.horizon), &run.data, thr));
        desk.runs.push(run);
    }
    desk.elapsed = start.elapsed();
    desk
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn mining_beats_random(desk: &Desk) -> Outcome {
    let mined = mean(desk.mined.iter().map(|&m| m as f64));
    let base = mean(desk.baselines.iter().map(|&b| b as f64));
    let agrees = desk.runs.iter().zip(&desk.mined).all(|(r, m)| r.mined_positives == *m);
    let ratio = mined / base;
    outcome(
        ratio >= 2.0 && agrees,
        format!("mean distinct positives mined {mined:.1} vs random {base:.1}, ratio {ratio:.3} (target >= 2)"),
    )
}

fn desk_precision(desk: &Desk) -> Outcome {
    let good = desk.final_ens.iter().filter(|(p, _)| *p >= 0.9).count();
    let agrees = desk
        .runs
        .iter()
        .zip(&desk.final_ens)
        .all(|(r, (p, _))| (r.reports.ensemble.last().unwrap().precision - p).abs() < 1e-12);
    let mean_p = mean(desk.final_ens.iter().map(|x| x.0));
    outcome(
        good >= 16 && agrees,
        format!("precision >= 0.90 in {good}/20 seeds (target >= 16), mean {mean_p:.3}"),
    )
}

fn generalization(desk: &Desk) -> Outcome {
    let last = |r: &SeedRun| r.reports.ensemble.last().unwrap().clone();
    let rp = mean(desk.runs.iter().map(|r| last(r).ratio_patterns));
    let ru = mean(desk.runs.iter().map(|r| last(r).ratio_unseen));
    outcome(
        rp > 0.0 && ru > 0.05,
        format!("mean ratio_patterns {rp:.3} (target > 0), mean ratio_unseen {ru:.3} (target > 0.05)"),
    )
}

fn ensemble_vs_single(desk: &Desk) -> Outcome {
    let wins = desk
        .final_ens
        .iter()
        .zip(&desk.final_single)
        .filter(|(e, s)| e.1 >= s.1)
        .count();
    let re = mean(desk.final_ens.iter().map(|x| x.1));
    let rs = mean(desk.final_single.iter().map(|x| x.1));
    outcome(
        wins >= 15,
        format!("ensemble recall >= single in {wins}/20 seeds (target >= 15), mean {re:.3} vs {rs:.3}"),
    )
}

fn pipeline_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("desk.toml");
    std::fs::write(
        &config,
        "[sim]\npreset = \"protective\"\ndim = 50\nn_combinations = 5000\nn_patterns = 5\n\n\
         [miner]\nhorizon = 2000\nwarmup = 500\nhidden_layers = [8]\n\n[eval]\nevery = 500\nseeds = [1]\n",
    )
    .unwrap();
    let run = |root: &Path, config: &Path| -> pipmine::Result<()> {
        let ov = Overrides::default();
        let g = root.join("gen");
        commands::cmd_generate(config, &g, &ov)?;
        let data = g.join(commands::DATASET_FILE);
        commands::cmd_mine(config, &data, &root.join("mine"), &ov)?;
        commands::cmd_evaluate(
            config,
            &data,
            &g.join(commands::PATTERNS_FILE),
            &root.join("mine"),
            &root.join("eval"),
            &ov,
        )?;
        Ok(())
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if let Err(e) = run(&a, &config) {
        return outcome(false, format!("first run failed: {e}"));
    }
    // Second run driven by the recorded manifest.
    if let Err(e) = run(&b, &a.join("mine").join("manifest.json")) {
        return outcome(false, format!("second run failed: {e}"));
    }
    let files = ["gen/dataset.txt", "mine/seed-1/trace.csv", "eval/metrics.csv"];
    let same: Vec<bool> = files
        .iter()
        .map(|f| matches!((std::fs::read(a.join(f)), std::fs::read(b.join(f))), (Ok(x), Ok(y)) if x == y && !x.is_empty()))
        .collect();
    outcome(
        same.iter().all(|&s| s),
        format!("byte-identical {:?}", files.iter().zip(&same).collect::<Vec<_>>()),
    )
}

fn full_scale() -> Outcome {
    let sim = SimConfig::neutral(500, 100_000, 10);
    let miner = MinerConfig::default();
    let run = pipmine::pipmine_core::evalkit::run_seed::<ChaCha8Rng>(&sim, &miner, 2000, None, 0).unwrap();
    let last = run.reports.ensemble.last().unwrap();
    outcome(
        (0.55..=0.80).contains(&last.recall) && last.precision >= 0.95,
        format!(
            "recall {:.3} (target 0.55-0.80), precision {:.3} (target >= 0.95)",
            last.recall, last.precision
        ),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let include_ignored = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let only_ignored = args.iter().any(|a| a == "--ignored");
    let secs = Duration::from_secs;
    let mut all = true;
    if !only_ignored {
        all &= report("1", "gradient correctness", secs(10), gradient_check);
        all &= report("2", "relative-risk oracle", secs(10), rr_oracle);
        all &= report("3", "DE sanity", secs(30), de_sanity);
        // Criteria 4 to 7 share one 20-seed desk-scale experiment; each line
        // reports the shared wall time.
        let desk = desk_runs();
        let (budget, took) = (secs(1200), desk.elapsed);
        all &= print_line(
            "4",
            "desk-scale mining beats random",
            budget,
            took,
            mining_beats_random(&desk),
        );
        all &= print_line("5", "desk-scale precision", budget, took, desk_precision(&desk));
        all &= print_line("6", "generalization signal", budget, took, generalization(&desk));
        all &= print_line("7", "ensemble >= single", budget, took, ensemble_vs_single(&desk));
        all &= report("8", "pipeline determinism", secs(120), pipeline_determinism);
    }
    if include_ignored {
        all &= report("9", "full-scale reproduction", secs(24 * 3600), full_scale);
    } else {
        println!("[SKIP] 9 full-scale reproduction: long-running, pass --ignored to run");
    }
    if !all {
        std::process::exit(1);
    }
}
