use pipmine_core::bandit::DesignMatrixDiag;
use pipmine_core::claims::{
    contingency, hamming_distance, relative_risk, ContingencyTable, DrugCombination, Exposure, ExposureRow,
    HistoricalDataset,
};
use pipmine_core::evalkit::{random_baseline, random_baseline_expectation};
use pipmine_core::miner::{EnsembleModel, Snapshot};
use pipmine_core::neuralnet::Mlp;
use pipmine_core::simgen::{self, DangerousPattern, SimConfig};
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn combo_in(dim: usize) -> impl Strategy<Value = DrugCombination> {
    btree_set(0..dim as u32, 0..=dim).prop_map(move |s| DrugCombination::new(dim, s.into_iter().collect()).unwrap())
}

fn central_difference(net: &Mlp, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.param_count())
        .map(|i| {
            let t = net.parameters()[i];
            probe.parameters_mut()[i] = t + h;
            let up = probe.forward(x).unwrap();
            probe.parameters_mut()[i] = t - h;
            let down = probe.forward(x).unwrap();
            probe.parameters_mut()[i] = t;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_finite_differences(d in 1usize..=10, h in 1usize..=8, depth in 1usize..=2, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![d];
        dims.extend(std::iter::repeat_n(h, depth));
        dims.push(1);
        let net = Mlp::new(&dims, &mut rng).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = net.param_gradient(&x).unwrap();
        let fd = central_difference(&net, &x, 1e-6);
        let scale = norm(g.iter().copied()).max(norm(fd.iter().copied()));
        let err = norm(g.iter().zip(&fd).map(|(a, b)| a - b));
        prop_assert!(scale == 0.0 || err / scale < 1e-4, "relative error {}", err / scale);
    }

    #[test]
    fn hamming_is_a_metric(
        (x, y, z) in (1usize..70).prop_flat_map(|d| (combo_in(d), combo_in(d), combo_in(d)))
    ) {
        let h = |a: &DrugCombination, b: &DrugCombination| hamming_distance(a, b).unwrap();
        prop_assert_eq!(h(&x, &x), 0);
        prop_assert_eq!(h(&x, &y), h(&y, &x));
        prop_assert!(h(&x, &z) <= h(&x, &y) + h(&y, &z));
        let brute = x.to_multi_hot().iter().zip(y.to_multi_hot()).filter(|(a, b)| **a != *b).count();
        prop_assert_eq!(h(&x, &y), brute);
    }

    #[test]
    fn nearest_matches_exhaustive_scan(
        (entries, query) in (1usize..=30).prop_flat_map(|d| (
            btree_set(btree_set(0..d as u32, 0..=d.min(8)), 1..500),
            combo_in(d),
        ))
    ) {
        let d = query.dim();
        let data = HistoricalDataset::new(
            d,
            entries.into_iter().map(|s| (DrugCombination::new(d, s.into_iter().collect()).unwrap(), 1.0)).collect(),
        ).unwrap();
        let qv = query.to_multi_hot();
        let dist = |c: &DrugCombination| c.to_multi_hot().iter().zip(&qv).filter(|(a, b)| *a != *b).count();
        let best = data.entries().iter().map(|(c, _)| dist(c)).min().unwrap();
        let first = data.entries().iter().position(|(c, _)| dist(c) == best).unwrap();
        prop_assert_eq!(data.nearest_index(&query).unwrap(), first);
        let ties: Vec<usize> = (0..data.len()).filter(|&i| dist(data.combination(i)) == best).collect();
        prop_assert_eq!(data.nearest_ties(&query).unwrap(), ties);
    }

    #[test]
    fn proportional_tables_give_unit_risk(a in 0u64..1000, b in 0u64..1000, k in 1u64..50) {
        prop_assume!(a + b > 0 && a > 0);
        let t = ContingencyTable::new(a, b, k * a, k * b);
        prop_assert!((relative_risk(&t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn std_monotone_in_each_diagonal_entry(
        grad in vec(-3.0f64..3.0, 1..20),
        diag in vec(1.0f64..5.0, 20),
        which in any::<prop::sample::Index>(),
        bump in 0.0f64..10.0,
    ) {
        let m = grad.len();
        let u = DesignMatrixDiag::from_parts(diag[..m].to_vec(), 1.0).unwrap();
        let mut larger = diag[..m].to_vec();
        larger[which.index(m)] += bump;
        let v = DesignMatrixDiag::from_parts(larger, 1.0).unwrap();
        prop_assert!(v.predictive_std(&grad).unwrap() <= u.predictive_std(&grad).unwrap() + 1e-15);
    }

    #[test]
    fn std_shrinks_after_update_and_scales_linearly(grad in vec(-3.0f64..3.0, 1..20), c in 0.0f64..10.0, lambda in 0.1f64..4.0) {
        let mut u = DesignMatrixDiag::new(grad.len(), lambda).unwrap();
        let before = u.predictive_std(&grad).unwrap();
        let scaled: Vec<f64> = grad.iter().map(|g| c * g).collect();
        let s = u.predictive_std(&scaled).unwrap();
        prop_assert!((s - c * before).abs() <= 1e-9 * (1.0 + s));
        u.update(&grad).unwrap();
        prop_assert!(u.predictive_std(&grad).unwrap() <= before + 1e-15);
        // diag U = lambda + g^2: std^2 = lambda * sum g^2 / (lambda + g^2)
        let oracle: f64 = grad.iter().map(|g| lambda * g * g / (lambda + g * g)).sum::<f64>().sqrt();
        prop_assert!((u.predictive_std(&grad).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn classify_is_monotone_in_membership(seeds in vec(any::<u64>(), 1..6), extra in any::<u64>(), probe in any::<u64>()) {
        let member = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut net = Mlp::new(&[6, 3, 1], &mut rng).unwrap();
            let m = net.param_count();
            net.parameters_mut()[m - 1] = rng.random_range(0.5..3.0);
            Snapshot { step: 0, network: net, design: DesignMatrixDiag::new(m, 1.0).unwrap() }
        };
        let small = EnsembleModel::new(seeds.iter().map(|&s| member(s)).collect(), 1.1, 0.5);
        let mut big = small.clone();
        big.members.push(member(extra));
        let mut rng = ChaCha8Rng::seed_from_u64(probe);
        for _ in 0..30 {
            let bits: Vec<u8> = (0..6).map(|_| rng.random_range(0..2)).collect();
            let c = DrugCombination::from_multi_hot(&bits);
            if small.classify(&c).unwrap() {
                prop_assert!(big.classify(&c).unwrap());
            }
        }
    }
}

#[test]
fn rr_matches_brute_force_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let dim = rng.random_range(1..6);
        let rows: Vec<ExposureRow> = (0..rng.random_range(1..60))
            .map(|_| {
                let bits: Vec<u8> = (0..dim).map(|_| u8::from(rng.random_bool(0.4))).collect();
                ExposureRow {
                    combination: DrugCombination::from_multi_hot(&bits),
                    outcome: rng.random_bool(0.3),
                }
            })
            .collect();
        let target = rows[rng.random_range(0..rows.len())].combination.clone();
        let (mut a, mut b, mut c, mut d) = (0u64, 0u64, 0u64, 0u64);
        for r in &rows {
            match (r.combination.drugs() == target.drugs(), r.outcome) {
                (true, true) => a += 1,
                (true, false) => b += 1,
                (false, true) => c += 1,
                (false, false) => d += 1,
            }
        }
        let t = contingency(&target, &rows, Exposure::Exact);
        assert_eq!((t.a, t.b, t.c, t.d), (a, b, c, d));
        let data = HistoricalDataset::from_exposure_rows(dim, rows.clone(), Exposure::Exact).unwrap();
        match data.position(&target) {
            Some(i) => {
                assert!(c > 0);
                let expected = (a * (c + d)) as f64 / (c * (a + b)) as f64;
                assert!((data.true_rr(i) - expected).abs() <= 1e-12 * expected.max(1.0));
            }
            None => assert_eq!(c, 0),
        }
    }
}

#[test]
fn random_baseline_matches_closed_form() {
    let dim = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let entries: Vec<_> = (0..300u32)
        .map(|i| {
            let bits: Vec<u8> = (0..dim).map(|j| ((i >> j) & 1) as u8).collect();
            (
                DrugCombination::from_multi_hot(&bits),
                if i % 7 == 0 { 2.0 } else { 0.5 },
            )
        })
        .collect();
    let data = HistoricalDataset::new(dim, entries).unwrap();
    let positives = data.count_above(1.1);
    let budget = 250;
    let trials = 1000;
    let counts: Vec<f64> = (0..trials)
        .map(|_| random_baseline(&data, budget, 1.1, &mut rng) as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / trials as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let expected = random_baseline_expectation(positives, data.len(), budget);
    let se = (var / trials as f64).sqrt();
    assert!(
        (mean - expected).abs() < 4.0 * se,
        "mean {mean} expected {expected} se {se}"
    );
}

#[test]
fn pattern_size_matches_binomial_mean() {
    let cfg = SimConfig {
        pattern_drug_prob: 0.01,
        ..SimConfig::neutral(500, 0, 10)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut sizes = Vec::new();
    for _ in 0..300 {
        sizes.extend(
            simgen::generate_patterns(&cfg, &mut rng)
                .unwrap()
                .iter()
                .map(|p| p.combination.len() as f64),
        );
    }
    // Empty patterns are redrawn, so the mean is that of Binomial(500, 0.01)
    // conditioned on being non-zero.
    let p0 = 0.99f64.powi(500);
    let expected = 5.0 / (1.0 - p0);
    let n = sizes.len() as f64;
    let mean = sizes.iter().sum::<f64>() / n;
    let se = (5.0 * 0.99 / n).sqrt();
    assert!((mean - expected).abs() < 4.0 * se, "mean {mean} expected {expected}");
}

#[test]
fn half_overlap_interpolates() {
    let dim = 20;
    let pattern = DangerousPattern {
        combination: DrugCombination::new(dim, vec![0, 1, 2, 3]).unwrap(),
        pattern_rr: 3.0,
    };
    let cfg = SimConfig::neutral(dim, 0, 1);
    let combo = DrugCombination::new(dim, vec![0, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 4000;
    let mean = (0..n)
        .map(|_| simgen::assign_rr(&combo, std::slice::from_ref(&pattern), &cfg, &mut rng).unwrap())
        .sum::<f64>()
        / n as f64;
    let j = 2.0 / 4.0;
    let expected = cfg.mu_disjoint + (pattern.pattern_rr - cfg.mu_disjoint) * j;
    assert!(mean > cfg.mu_disjoint && mean < pattern.pattern_rr);
    assert!((mean - expected).abs() < 4.0 * cfg.sigma_inter / (n as f64).sqrt());
}

#[test]
fn desk_disjoint_rr_within_four_sigma() {
    for preset in [simgen::Preset::Neutral, simgen::Preset::Protective] {
        let cfg = SimConfig::preset(preset, 50, 5000, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (data, patterns) = simgen::generate_dataset(&cfg, &mut rng).unwrap();
        let mut checked = 0;
        for (combo, rr) in data.entries() {
            if patterns.iter().all(|p| combo.intersection_len(&p.combination) == 0) {
                checked += 1;
                let lo = (cfg.mu_disjoint - 4.0 * cfg.sigma_disjoint).max(0.0);
                assert!(*rr >= lo && *rr <= cfg.mu_disjoint + 4.0 * cfg.sigma_disjoint, "{rr}");
            }
        }
        assert!(checked > 100, "{checked}");
    }
}

#[test]
fn desk_histogram_modes() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (neutral, _) = simgen::generate_dataset(&SimConfig::neutral(50, 5000, 5), &mut rng).unwrap();
        let mode = simgen::histogram_mode(&simgen::rr_histogram(&neutral, 0.1)).unwrap();
        assert!((mode - 1.0).abs() < 1e-9, "neutral mode {mode}");
        let (protective, _) = simgen::generate_dataset(&SimConfig::protective(50, 5000, 5), &mut rng).unwrap();
        let mode = simgen::histogram_mode(&simgen::rr_histogram(&protective, 0.1)).unwrap();
        assert!(mode < 0.5, "protective mode {mode}");
    }
}
