//! Drug combinations, the historical dataset and the relative-risk oracle.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

const WORD_BITS: usize = 64;

fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD_BITS)
}

/// A set of drugs out of `dim` possible ones, stored as sorted indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DrugCombination {
    dim: usize,
    drugs: Vec<u32>,
}

impl DrugCombination {
    /// Builds a combination from arbitrary-order indices. Indices must be
    /// unique and below `dim`.
    pub fn new(dim: usize, mut drugs: Vec<u32>) -> Result<Self> {
        drugs.sort_unstable();
        for pair in drugs.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::DuplicateIndex(pair[0]));
            }
        }
        if let Some(&last) = drugs.last() {
            if last as usize >= dim {
                return Err(Error::IndexOutOfRange { index: last, dim });
            }
        }
        Ok(Self { dim, drugs })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, drugs: Vec::new() }
    }

    /// Builds a combination from a multi-hot vector (any non-zero entry is
    /// a present drug).
    pub fn from_multi_hot(bits: &[u8]) -> Self {
        let drugs = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| i as u32)
            .collect();
        Self { dim: bits.len(), drugs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drugs(&self) -> &[u32] {
        &self.drugs
    }

    pub fn len(&self) -> usize {
        self.drugs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drugs.is_empty()
    }

    pub fn contains(&self, drug: u32) -> bool {
        self.drugs.binary_search(&drug).is_ok()
    }

    /// True when every drug of `other` is also in `self`.
    pub fn is_superset_of(&self, other: &DrugCombination) -> bool {
        other.drugs.iter().all(|&d| self.contains(d))
    }

    /// Dense multi-hot rendering as network input.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &d in &self.drugs {
            out[d as usize] = 1.0;
        }
        out
    }

    pub fn to_multi_hot(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.dim];
        for &d in &self.drugs {
            out[d as usize] = 1;
        }
        out
    }

    /// Packed bit blocks, little-endian within each 64-bit word.
    pub fn to_bits(&self) -> Vec<u64> {
        let mut words = vec![0u64; words_for(self.dim)];
        for &d in &self.drugs {
            let d = d as usize;
            words[d / WORD_BITS] |= 1u64 << (d % WORD_BITS);
        }
        words
    }

    /// Number of drugs present in both combinations.
    pub fn intersection_len(&self, other: &DrugCombination) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.drugs.len() && j < other.drugs.len() {
            match self.drugs[i].cmp(&other.drugs[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Size of the symmetric difference of two combinations.
pub fn hamming_distance(x: &DrugCombination, y: &DrugCombination) -> Result<usize> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch {
            expected: x.dim,
            found: y.dim,
        });
    }
    Ok(x.len() + y.len() - 2 * x.intersection_len(y))
}

fn packed_hamming(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Two-by-two exposure/outcome counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContingencyTable {
    /// Exposed with outcome.
    pub a: u64,
    /// Exposed without outcome.
    pub b: u64,
    /// Unexposed with outcome.
    pub c: u64,
    /// Unexposed without outcome.
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn relative_risk(&self) -> Result<f64> {
        relative_risk(self)
    }
}

/// Outcome rate among the exposed over the rate among the unexposed:
/// `a(c + d) / (c(a + b))`.
pub fn relative_risk(table: &ContingencyTable) -> Result<f64> {
    let exposed = table.a + table.b;
    if table.c == 0 || exposed == 0 {
        return Err(Error::UndefinedRelativeRisk { c: table.c, exposed });
    }
    let num = table.a as u128 * (table.c as u128 + table.d as u128);
    let den = table.c as u128 * exposed as u128;
    Ok(num as f64 / den as f64)
}

/// How a raw row counts as exposed to a combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Exposure {
    /// The row's drug set is exactly the combination.
    #[default]
    Exact,
    /// The row's drug set contains the combination.
    Superset,
}

/// One claims row: the drugs a patient took together and whether the
/// health outcome occurred.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureRow {
    pub combination: DrugCombination,
    pub outcome: bool,
}

/// Counts the contingency table of `combo` over raw rows.
pub fn contingency(combo: &DrugCombination, rows: &[ExposureRow], exposure: Exposure) -> ContingencyTable {
    let mut t = ContingencyTable::default();
    for row in rows {
        let exposed = match exposure {
            Exposure::Exact => row.combination == *combo,
            Exposure::Superset => row.combination.is_superset_of(combo),
        };
        match (exposed, row.outcome) {
            (true, true) => t.a += 1,
            (true, false) => t.b += 1,
            (false, true) => t.c += 1,
            (false, false) => t.d += 1,
        }
    }
    t
}

/// The pool of distinct combinations the agent may play, each with its
/// ground-truth relative risk.
#[derive(Debug, Clone)]
pub struct HistoricalDataset {
    dim: usize,
    entries: Vec<(DrugCombination, f64)>,
    words: usize,
    bits: Vec<u64>,
    index: BTreeMap<Vec<u32>, usize>,
    rows: Option<Vec<ExposureRow>>,
}

impl PartialEq for HistoricalDataset {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries && self.rows == other.rows
    }
}

impl HistoricalDataset {
    /// Builds a dataset from precomputed relative risks. Combinations must
    /// be pairwise distinct and share `dim`.
    pub fn new(dim: usize, entries: Vec<(DrugCombination, f64)>) -> Result<Self> {
        let words = words_for(dim);
        let mut bits = Vec::with_capacity(words * entries.len());
        let mut index = BTreeMap::new();
        for (i, (combo, _)) in entries.iter().enumerate() {
            if combo.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: combo.dim(),
                });
            }
            if index.insert(combo.drugs().to_vec(), i).is_some() {
                return Err(Error::DuplicateCombination(i));
            }
            bits.extend(combo.to_bits());
        }
        Ok(Self {
            dim,
            entries,
            words,
            bits,
            index,
            rows: None,
        })
    }

    /// The entries at `indices`, in the given order. Raw rows are dropped.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let entries = indices
            .iter()
            .map(|&i| {
                self.entries
                    .get(i)
                    .cloned()
                    .ok_or(Error::InvalidConfig("selection index out of range"))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.dim, entries)
    }

    /// Builds a dataset from raw claims rows, computing each distinct
    /// combination's relative risk from its contingency table. Combinations
    /// whose relative risk is undefined are left out. Entries are ordered by
    /// first appearance.
    pub fn from_exposure_rows(dim: usize, rows: Vec<ExposureRow>, exposure: Exposure) -> Result<Self> {
        let mut seen = BTreeMap::new();
        let mut order = Vec::new();
        for row in &rows {
            if row.combination.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.combination.dim(),
                });
            }
            if seen.insert(row.combination.drugs().to_vec(), ()).is_none() {
                order.push(row.combination.clone());
            }
        }
        let entries = order
            .into_iter()
            .filter_map(|combo| {
                let rr = relative_risk(&contingency(&combo, &rows, exposure)).ok()?;
                Some((combo, rr))
            })
            .collect();
        let mut data = Self::new(dim, entries)?;
        data.rows = Some(rows);
        Ok(data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(DrugCombination, f64)] {
        &self.entries
    }

    pub fn combination(&self, i: usize) -> &DrugCombination {
        &self.entries[i].0
    }

    pub fn true_rr(&self, i: usize) -> f64 {
        self.entries[i].1
    }

    pub fn rows(&self) -> Option<&[ExposureRow]> {
        self.rows.as_deref()
    }

    /// Entry index of `combo`, if present.
    pub fn position(&self, combo: &DrugCombination) -> Option<usize> {
        if combo.dim() != self.dim {
            return None;
        }
        self.index.get(combo.drugs()).copied()
    }

    pub fn contains(&self, combo: &DrugCombination) -> bool {
        self.position(combo).is_some()
    }

    /// Entry index of the member closest to `query` in Hamming distance;
    /// ties go to the lowest index.
    pub fn nearest_index(&self, query: &DrugCombination) -> Result<usize> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        if self.entries.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(i) = self.position(query) {
            return Ok(i);
        }
        let q = query.to_bits();
        let mut best = (u32::MAX, 0usize);
        for (i, block) in self.bits.chunks_exact(self.words.max(1)).enumerate() {
            let dist = if self.words == 0 { 0 } else { packed_hamming(block, &q) };
            if dist < best.0 {
                best = (dist, i);
                if dist == 0 {
                    break;
                }
            }
        }
        // dim == 0: every entry is the empty combination, only one can exist.
        Ok(best.1)
    }

    /// Every entry index at the minimal Hamming distance from `query`, in
    /// ascending order.
    pub fn nearest_ties(&self, query: &DrugCombination) -> Result<Vec<usize>> {
        let first = self.nearest_index(query)?;
        if self.words == 0 {
            return Ok(vec![first]);
        }
        let q = query.to_bits();
        let best = packed_hamming(&self.bits[first * self.words..(first + 1) * self.words], &q);
        Ok(self
            .bits
            .chunks_exact(self.words)
            .enumerate()
            .skip(first)
            .filter(|(_, block)| packed_hamming(block, &q) == best)
            .map(|(i, _)| i)
            .collect())
    }

    pub fn nearest(&self, query: &DrugCombination) -> Result<&DrugCombination> {
        self.nearest_index(query).map(|i| &self.entries[i].0)
    }

    pub fn count_above(&self, threshold: f64) -> usize {
        self.entries.iter().filter(|(_, rr)| *rr > threshold).count()
    }
}

/// Member of `data` closest to `query` (lowest index on ties).
pub fn nearest_in_dataset<'a>(query: &DrugCombination, data: &'a HistoricalDataset) -> Result<&'a DrugCombination> {
    data.nearest(query)
}

/// A played combination and the noisy relative risk observed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningSample {
    pub combination: DrugCombination,
    pub observed_reward: f64,
}

/// True relative risk of `combo` plus `Normal(0, noise_sigma)` noise. The
/// result is not clamped and may be negative.
pub fn observe_reward<R: Rng + ?Sized>(
    combo: &DrugCombination,
    data: &HistoricalDataset,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    let i = data.position(combo).ok_or(Error::CombinationNotFound)?;
    observe_reward_at(data, i, noise_sigma, rng)
}

pub(crate) fn observe_reward_at<R: Rng + ?Sized>(
    data: &HistoricalDataset,
    index: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    let rr = data.true_rr(index);
    if noise_sigma == 0.0 {
        return Ok(rr);
    }
    let noise =
        Normal::new(0.0, noise_sigma).map_err(|_| Error::InvalidConfig("noise_sigma must be finite and >= 0"))?;
    Ok(rr + noise.sample(rng))
}
