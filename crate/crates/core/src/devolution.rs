//! Differential evolution with the best/1/bin strategy over binary vectors.
//!
//! Each step takes the current best member `b` and, for every member `w_i`,
//! builds the mutant `b + F (w_r1 - w_r2)` (rounded and clamped back to
//! `{0, 1}`), crosses it with `w_i` component-wise with rate `C` (one
//! random component always comes from the mutant) and keeps the trial when
//! it scores at least as well as `w_i`. Scores are cached, so the objective
//! is called once per member at start-up and once per trial.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DeConfig {
    pub population_size: usize,
    pub crossover_rate: f64,
    pub differential_weight: f64,
    pub steps: usize,
    /// Per-component probability of a one in the initial population. The
    /// miner overrides this with the dataset's mean density.
    pub init_density: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size: 32,
            crossover_rate: 0.9,
            differential_weight: 1.0,
            steps: 16,
            init_density: 0.5,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::InvalidConfig("population_size must be >= 4"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::InvalidConfig("crossover_rate must lie in [0, 1]"));
        }
        if !(self.differential_weight > 0.0) {
            return Err(Error::InvalidConfig("differential_weight must be > 0"));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.init_density) {
            return Err(Error::InvalidConfig("init_density must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Upper bound on objective calls for one run.
    pub fn evaluation_budget(&self) -> usize {
        self.population_size * (self.steps + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    /// Highest-scoring member of the final population.
    pub best: Vec<u8>,
    pub best_score: f64,
    /// Best score of the initial population followed by the best score after
    /// each step.
    pub best_history: Vec<f64>,
    pub evaluations: usize,
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Maximizes `objective` over `{0,1}^dim`.
pub fn de_optimize<R, Q>(cfg: &DeConfig, dim: usize, mut objective: Q, rng: &mut R) -> Result<DeOutcome>
where
    R: Rng + ?Sized,
    Q: FnMut(&[u8]) -> f64,
{
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be >= 1"));
    }
    let n = cfg.population_size;
    let mut population: Vec<Vec<u8>> = (0..n)
        .map(|_| (0..dim).map(|_| u8::from(rng.random_bool(cfg.init_density))).collect())
        .collect();
    let mut scores: Vec<f64> = population.iter().map(|w| objective(w)).collect();
    let mut evaluations = n;
    let mut best_history = Vec::with_capacity(cfg.steps + 1);
    best_history.push(scores[argmax(&scores)]);

    let mut trial = vec![0u8; dim];
    for _ in 0..cfg.steps {
        let b = argmax(&scores);
        let base = population[b].clone();
        for i in 0..n {
            let r1 = pick_other(rng, n, &[i]);
            let r2 = pick_other(rng, n, &[i, r1]);
            let forced = rng.random_range(0..dim);
            for j in 0..dim {
                let take_mutant = j == forced || rng.random::<f64>() <= cfg.crossover_rate;
                trial[j] = if take_mutant {
                    let diff = population[r1][j] as f64 - population[r2][j] as f64;
                    let v = libm::round(base[j] as f64 + cfg.differential_weight * diff);
                    u8::from(v >= 1.0)
                } else {
                    population[i][j]
                };
            }
            let score = objective(&trial);
            evaluations += 1;
            if score >= scores[i] {
                population[i].copy_from_slice(&trial);
                scores[i] = score;
            }
        }
        best_history.push(scores[argmax(&scores)]);
    }
    let b = argmax(&scores);
    Ok(DeOutcome {
        best: population.swap_remove(b),
        best_score: scores[b],
        best_history,
        evaluations,
    })
}

fn pick_other<R: Rng + ?Sized>(rng: &mut R, n: usize, exclude: &[usize]) -> usize {
    loop {
        let r = rng.random_range(0..n);
        if !exclude.contains(&r) {
            return r;
        }
    }
}
