//! Synthetic polypharmacy data.
//!
//! A handful of hidden "dangerous patterns" with a high relative risk are
//! drawn first. Distinct drug combinations are then drawn independently and
//! each one gets a relative risk from its nearest pattern (Hamming
//! distance, lowest index on ties):
//!
//! - no drug in common: `max(0, Normal(mu_disjoint, sigma_disjoint))`
//! - otherwise, with Jaccard similarity `J` to the pattern:
//!   `max(0, Normal(mu_disjoint + (pattern_rr - mu_disjoint) * J, sigma_inter))`
//!
//! Patterns never appear among the generated combinations.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::claims::{hamming_distance, DrugCombination, HistoricalDataset};
use crate::{Error, Result};

/// Named instance profiles for the relative-risk mass of safe
/// combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Preset {
    /// Most relative risks close to 1.
    Neutral,
    /// Most relative risks well below 1.
    Protective,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SimConfig {
    pub dim: usize,
    pub n_combinations: usize,
    pub n_patterns: usize,
    pub pattern_drug_prob: f64,
    pub combo_drug_prob: f64,
    pub pattern_rr_range: (f64, f64),
    pub sigma_inter: f64,
    pub sigma_disjoint: f64,
    pub mu_disjoint: f64,
    pub seed: u64,
    /// Rejected draws allowed per requested item before giving up.
    pub retries_per_item: usize,
}

impl SimConfig {
    /// Preset parameters: five drugs per combination and two per pattern
    /// on average.
    pub fn preset(preset: Preset, dim: usize, n_combinations: usize, n_patterns: usize) -> Self {
        let (mu_disjoint, sigma_disjoint) = match preset {
            Preset::Neutral => (1.0, 0.05),
            Preset::Protective => (0.3, 0.15),
        };
        let combo_p = (5.0 / dim as f64).min(0.5);
        let pattern_p = (2.0 / dim as f64).min(0.5);
        Self {
            dim,
            n_combinations,
            n_patterns,
            pattern_drug_prob: pattern_p,
            combo_drug_prob: combo_p,
            pattern_rr_range: (2.0, 4.0),
            sigma_inter: 0.3,
            sigma_disjoint,
            mu_disjoint,
            seed: 0,
            retries_per_item: 100,
        }
    }

    pub fn neutral(dim: usize, n_combinations: usize, n_patterns: usize) -> Self {
        Self::preset(Preset::Neutral, dim, n_combinations, n_patterns)
    }

    pub fn protective(dim: usize, n_combinations: usize, n_patterns: usize) -> Self {
        Self::preset(Preset::Protective, dim, n_combinations, n_patterns)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1"));
        }
        let open_unit = |p: f64| p > 0.0 && p < 1.0;
        if !open_unit(self.pattern_drug_prob) {
            return Err(Error::InvalidConfig("pattern_drug_prob must lie in (0, 1)"));
        }
        if !open_unit(self.combo_drug_prob) {
            return Err(Error::InvalidConfig("combo_drug_prob must lie in (0, 1)"));
        }
        let (lo, hi) = self.pattern_rr_range;
        if !(lo > 1.1) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::InvalidConfig("pattern_rr_range must satisfy 1.1 < low <= high"));
        }
        if !(self.sigma_inter >= 0.0) || !(self.sigma_disjoint >= 0.0) {
            return Err(Error::InvalidConfig("sigma_inter and sigma_disjoint must be >= 0"));
        }
        if !self.mu_disjoint.is_finite() {
            return Err(Error::InvalidConfig("mu_disjoint must be finite"));
        }
        if self.retries_per_item == 0 {
            return Err(Error::InvalidConfig("retries_per_item must be >= 1"));
        }
        Ok(())
    }
}

/// A hidden generator combination with a high relative risk.
#[derive(Debug, Clone, PartialEq)]
pub struct DangerousPattern {
    pub combination: DrugCombination,
    pub pattern_rr: f64,
}

fn sample_subset<R: Rng + ?Sized>(dim: usize, p: f64, rng: &mut R) -> DrugCombination {
    let drugs = (0..dim as u32).filter(|_| rng.random_bool(p)).collect();
    DrugCombination::new(dim, drugs).expect("indices are sorted, unique and in range")
}

/// Draws `n_patterns` distinct, non-empty patterns.
pub fn generate_patterns<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Vec<DangerousPattern>> {
    cfg.validate()?;
    let cap = cfg.retries_per_item * cfg.n_patterns.max(1);
    let mut seen = BTreeSet::new();
    let mut patterns = Vec::with_capacity(cfg.n_patterns);
    let mut rejected = 0;
    let (lo, hi) = cfg.pattern_rr_range;
    while patterns.len() < cfg.n_patterns {
        let combination = sample_subset(cfg.dim, cfg.pattern_drug_prob, rng);
        if combination.is_empty() || !seen.insert(combination.drugs().to_vec()) {
            rejected += 1;
            if rejected > cap {
                return Err(Error::RetryCapExceeded(cap));
            }
            continue;
        }
        let pattern_rr = if hi > lo { rng.random_range(lo..hi) } else { lo };
        patterns.push(DangerousPattern {
            combination,
            pattern_rr,
        });
    }
    Ok(patterns)
}

/// Index of the pattern nearest to `combo` in Hamming distance (lowest index
/// on ties).
pub fn nearest_pattern(combo: &DrugCombination, patterns: &[DangerousPattern]) -> Result<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, p) in patterns.iter().enumerate() {
        let dist = hamming_distance(combo, &p.combination)?;
        if best.is_none_or(|(d, _)| dist < d) {
            best = Some((dist, i));
        }
    }
    best.map(|(_, i)| i).ok_or(Error::EmptyPatterns)
}

/// Mean of the relative-risk distribution for `combo`, and the std used
/// around it.
pub fn rr_mean_and_std(combo: &DrugCombination, patterns: &[DangerousPattern], cfg: &SimConfig) -> Result<(f64, f64)> {
    let nearest = &patterns[nearest_pattern(combo, patterns)?];
    let inter = combo.intersection_len(&nearest.combination);
    if inter == 0 {
        return Ok((cfg.mu_disjoint, cfg.sigma_disjoint));
    }
    let union = combo.len() + nearest.combination.len() - inter;
    let jaccard = inter as f64 / union as f64;
    Ok((
        cfg.mu_disjoint + (nearest.pattern_rr - cfg.mu_disjoint) * jaccard,
        cfg.sigma_inter,
    ))
}

/// Draws the ground-truth relative risk of `combo`.
pub fn assign_rr<R: Rng + ?Sized>(
    combo: &DrugCombination,
    patterns: &[DangerousPattern],
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<f64> {
    let (mean, std) = rr_mean_and_std(combo, patterns, cfg)?;
    let value = if std == 0.0 {
        mean
    } else {
        Normal::new(mean, std)
            .map_err(|_| Error::InvalidConfig("relative-risk std must be finite"))?
            .sample(rng)
    };
    Ok(value.max(0.0))
}

/// Draws patterns, then `n_combinations` distinct non-empty combinations
/// (none equal to a pattern), then a relative risk for each combination.
pub fn generate_dataset<R: Rng + ?Sized>(
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(HistoricalDataset, Vec<DangerousPattern>)> {
    cfg.validate()?;
    let patterns = generate_patterns(cfg, rng)?;
    let mut seen: BTreeSet<Vec<u32>> = patterns.iter().map(|p| p.combination.drugs().to_vec()).collect();
    let cap = cfg.retries_per_item * cfg.n_combinations.max(1);
    let mut combos = Vec::with_capacity(cfg.n_combinations);
    let mut rejected = 0;
    while combos.len() < cfg.n_combinations {
        let combo = sample_subset(cfg.dim, cfg.combo_drug_prob, rng);
        if combo.is_empty() || !seen.insert(combo.drugs().to_vec()) {
            rejected += 1;
            if rejected > cap {
                return Err(Error::RetryCapExceeded(cap));
            }
            continue;
        }
        combos.push(combo);
    }
    let mut entries = Vec::with_capacity(combos.len());
    for combo in combos {
        let rr = assign_rr(&combo, &patterns, cfg, rng)?;
        entries.push((combo, rr));
    }
    Ok((HistoricalDataset::new(cfg.dim, entries)?, patterns))
}

/// Histogram of true relative risks with buckets centred on multiples of
/// `width`: bucket `k` covers `[(k - 0.5) width, (k + 0.5) width)`.
/// Returns `(centre, count)` for every bucket from 0 up to the largest
/// occupied one.
pub fn rr_histogram(data: &HistoricalDataset, width: f64) -> Vec<(f64, usize)> {
    assert!(width > 0.0, "bucket width must be positive");
    let mut counts: Vec<usize> = Vec::new();
    for &(_, rr) in data.entries() {
        let k = libm::floor(rr / width + 0.5) as usize;
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * width, c))
        .collect()
}

/// Centre of the most populated bucket (lowest on ties).
pub fn histogram_mode(hist: &[(f64, usize)]) -> Option<f64> {
    let mut best: Option<(f64, usize)> = None;
    for &(centre, count) in hist {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((centre, count));
        }
    }
    best.map(|(c, _)| c)
}
