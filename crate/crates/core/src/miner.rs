//! The mining loop: neural Thompson sampling over drug combinations, with
//! differential evolution proposing actions and a Hamming 1-NN projection
//! onto the historical dataset.
//!
//! Each post-warm-up step:
//!
//! 1. run DE on `q(x) ~ Normal(f(x), nu * s(x))` to get a recommended
//!    combination;
//! 2. fold the gradient at the *recommended* combination into `U`;
//! 3. play its nearest dataset member and observe a noisy relative risk;
//! 4. every `retrain_every` steps (and at the horizon) retrain the network
//!    from its current parameters on everything observed so far and append
//!    a `(theta, U)` snapshot to the ensemble.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bandit::{DesignMatrixDiag, PosteriorParams};
use crate::claims::{observe_reward_at, DrugCombination, HistoricalDataset, MiningSample};
use crate::devolution::{de_optimize, DeConfig};
use crate::neuralnet::{Mlp, TrainConfig};
use crate::{Error, Result};

/// Which of several equally near dataset members a recommendation is
/// projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TieBreak {
    /// Lowest entry index.
    #[default]
    Lowest,
    /// Uniformly at random, drawn from the run's generator.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MinerConfig {
    /// Total number of plays `T`, warm-up included.
    pub horizon: usize,
    /// Number of uniformly random warm-up plays.
    pub warmup: usize,
    /// Design-matrix regularizer.
    pub lambda: f64,
    /// Exploration factor scaling the posterior std.
    pub nu: f64,
    /// Hidden layer widths; the input width is the dataset dimension.
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
    pub retrain_every: usize,
    pub de: DeConfig,
    pub noise_sigma: f64,
    pub rr_threshold: f64,
    pub lcb_multiplier: f64,
    pub tie_break: TieBreak,
    pub seed: u64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            horizon: 30_000,
            warmup: 10_000,
            lambda: 1.0,
            nu: 1.0,
            hidden_layers: alloc::vec![64],
            train: TrainConfig::default(),
            retrain_every: 10,
            de: DeConfig::default(),
            noise_sigma: 0.1,
            rr_threshold: 1.1,
            lcb_multiplier: 3.0,
            tie_break: TieBreak::Lowest,
            seed: 0,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup == 0 {
            return Err(Error::InvalidConfig("warmup must be >= 1"));
        }
        if self.warmup > self.horizon {
            return Err(Error::InvalidConfig("warmup must not exceed horizon"));
        }
        if self.retrain_every == 0 {
            return Err(Error::InvalidConfig("retrain_every must be >= 1"));
        }
        if !(self.rr_threshold > 0.0) {
            return Err(Error::InvalidConfig("rr_threshold must be > 0"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidConfig("lambda must be > 0"));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::InvalidConfig("nu must be >= 0"));
        }
        if !(self.lcb_multiplier >= 0.0) {
            return Err(Error::InvalidConfig("lcb_multiplier must be >= 0"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0"));
        }
        self.train.validate()?;
        self.de.validate()
    }

    pub fn layer_dims(&self, dim: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 2);
        dims.push(dim);
        dims.extend_from_slice(&self.hidden_layers);
        dims.push(1);
        dims
    }

    /// Number of ensemble members a full run produces.
    pub fn expected_members(&self) -> usize {
        1 + (self.horizon - self.warmup).div_ceil(self.retrain_every)
    }

    fn is_retrain_step(&self, step: usize) -> bool {
        (step - self.warmup).is_multiple_of(self.retrain_every) || step == self.horizon
    }
}

/// Network parameters and design diagonal frozen at a retraining step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub network: Mlp,
    pub design: DesignMatrixDiag,
}

impl Snapshot {
    pub fn posterior(&self, combo: &DrugCombination, nu: f64) -> Result<PosteriorParams> {
        let (mean, grad) = self.network.predict_with_gradient(combo)?;
        Ok(PosteriorParams::new(
            mean,
            self.design.predictive_std_sparse(&grad)?,
            nu,
        ))
    }

    /// True when `mean - k * std > threshold`.
    pub fn votes(&self, combo: &DrugCombination, k: f64, threshold: f64) -> Result<bool> {
        // The lower bound never exceeds the mean, so skip the gradient when
        // the mean alone is too low.
        if self.network.predict(combo)? <= threshold {
            return Ok(false);
        }
        Ok(self.posterior(combo, 1.0)?.lower_bound(k) > threshold)
    }
}

/// Sequence of snapshots; a combination is flagged when any member's lower
/// confidence bound exceeds the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<Snapshot>,
    pub rr_threshold: f64,
    pub lcb_multiplier: f64,
}

impl EnsembleModel {
    pub fn new(members: Vec<Snapshot>, rr_threshold: f64, lcb_multiplier: f64) -> Self {
        Self {
            members,
            rr_threshold,
            lcb_multiplier,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.members.first().map(|s| s.network.input_dim())
    }

    pub fn classify(&self, combo: &DrugCombination) -> Result<bool> {
        classify(self, combo)
    }

    /// Members snapshotted at or before `step`.
    pub fn up_to(&self, step: usize) -> EnsembleModel {
        EnsembleModel {
            members: self.members.iter().filter(|s| s.step <= step).cloned().collect(),
            rr_threshold: self.rr_threshold,
            lcb_multiplier: self.lcb_multiplier,
        }
    }

    /// The most recent member at or before `step`, as a one-member ensemble.
    pub fn latest(&self, step: usize) -> EnsembleModel {
        EnsembleModel {
            members: self
                .members
                .iter()
                .rev()
                .find(|s| s.step <= step)
                .cloned()
                .into_iter()
                .collect(),
            rr_threshold: self.rr_threshold,
            lcb_multiplier: self.lcb_multiplier,
        }
    }
}

/// Single-vote rule over the ensemble members.
pub fn classify(ensemble: &EnsembleModel, combo: &DrugCombination) -> Result<bool> {
    if ensemble.members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    for member in &ensemble.members {
        if member.votes(combo, ensemble.lcb_multiplier, ensemble.rr_threshold)? {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based step index.
    pub step: usize,
    /// Action proposed by DE (the played action during warm-up).
    pub recommended: DrugCombination,
    pub played: DrugCombination,
    pub reward: f64,
}

/// Everything the loop carries between steps.
#[derive(Debug, Clone)]
pub struct MinerState {
    /// Number of completed plays.
    pub step: usize,
    pub network: Mlp,
    pub design: DesignMatrixDiag,
    pub samples: Vec<MiningSample>,
    pub snapshots: Vec<Snapshot>,
    pub trace: Vec<TraceRow>,
    /// Density of ones in the DE initial population.
    pub init_density: f64,
}

#[derive(Debug, Clone)]
pub struct MiningResult {
    pub samples: Vec<MiningSample>,
    pub ensemble: EnsembleModel,
    pub trace: Vec<TraceRow>,
}

fn check_data(data: &HistoricalDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

fn training_set(samples: &[MiningSample]) -> Vec<(&DrugCombination, f64)> {
    samples.iter().map(|s| (&s.combination, s.observed_reward)).collect()
}

/// Plays `warmup` uniformly random dataset members, accumulates `U` with
/// gradients at the initial parameters and trains the network once.
pub fn warmup<R: Rng + ?Sized>(data: &HistoricalDataset, cfg: &MinerConfig, rng: &mut R) -> Result<MinerState> {
    cfg.validate()?;
    check_data(data)?;
    let initial = Mlp::new(&cfg.layer_dims(data.dim()), rng)?;
    let mut design = DesignMatrixDiag::new(initial.param_count(), cfg.lambda)?;
    let mut samples = Vec::with_capacity(cfg.horizon);
    let mut trace = Vec::with_capacity(cfg.horizon);
    for step in 1..=cfg.warmup {
        let i = rng.random_range(0..data.len());
        let combo = data.combination(i);
        let reward = observe_reward_at(data, i, cfg.noise_sigma, rng)?;
        let (_, grad) = initial.predict_with_gradient(combo)?;
        design.update_sparse(&grad)?;
        samples.push(MiningSample {
            combination: combo.clone(),
            observed_reward: reward,
        });
        trace.push(TraceRow {
            step,
            recommended: combo.clone(),
            played: combo.clone(),
            reward,
        });
    }
    let (network, _) = initial.train(&training_set(&samples), &cfg.train, rng)?;
    let total_drugs: usize = data.entries().iter().map(|(c, _)| c.len()).sum();
    let init_density = (total_drugs as f64 / (data.len() * data.dim().max(1)) as f64).clamp(0.0, 1.0);
    Ok(MinerState {
        step: cfg.warmup,
        snapshots: alloc::vec![Snapshot {
            step: cfg.warmup,
            network: network.clone(),
            design: design.clone(),
        }],
        network,
        design,
        samples,
        trace,
        init_density,
    })
}

/// DE over one posterior draw per candidate evaluation. The standard normal
/// draws are taken from `rng` up front so DE and sampling share one stream.
pub fn recommend<R: Rng + ?Sized>(
    network: &Mlp,
    design: &DesignMatrixDiag,
    nu: f64,
    de: &DeConfig,
    rng: &mut R,
) -> Result<DrugCombination> {
    let draws: Vec<f64> = (0..de.evaluation_budget())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let mut next = draws.iter();
    let mut failure = None;
    let outcome = de_optimize(
        de,
        network.input_dim(),
        |x| {
            let combo = DrugCombination::from_multi_hot(x);
            let posterior = network
                .predict_with_gradient(&combo)
                .and_then(|(mean, grad)| Ok(PosteriorParams::new(mean, design.predictive_std_sparse(&grad)?, nu)));
            match posterior {
                Ok(p) => p.mean + p.nu * p.std * next.next().copied().unwrap_or(0.0),
                Err(e) => {
                    failure = Some(e);
                    f64::NEG_INFINITY
                }
            }
        },
        rng,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(DrugCombination::from_multi_hot(&outcome.best))
}

/// One post-warm-up play.
pub fn mining_step<R: Rng + ?Sized>(
    state: &mut MinerState,
    data: &HistoricalDataset,
    cfg: &MinerConfig,
    rng: &mut R,
) -> Result<()> {
    if state.step < cfg.warmup || state.snapshots.is_empty() {
        return Err(Error::InvalidConfig("warm-up has not completed"));
    }
    if state.step >= cfg.horizon {
        return Err(Error::InvalidConfig("horizon already reached"));
    }
    let step = state.step + 1;
    let de = DeConfig {
        init_density: state.init_density,
        ..cfg.de
    };
    let recommended = recommend(&state.network, &state.design, cfg.nu, &de, rng)?;
    let (_, grad) = state.network.predict_with_gradient(&recommended)?;
    state.design.update_sparse(&grad)?;
    let i = match cfg.tie_break {
        TieBreak::Lowest => data.nearest_index(&recommended)?,
        TieBreak::Random => {
            let ties = data.nearest_ties(&recommended)?;
            ties[rng.random_range(0..ties.len())]
        }
    };
    let played = data.combination(i).clone();
    let reward = observe_reward_at(data, i, cfg.noise_sigma, rng)?;
    state.samples.push(MiningSample {
        combination: played.clone(),
        observed_reward: reward,
    });
    state.trace.push(TraceRow {
        step,
        recommended,
        played,
        reward,
    });
    state.step = step;
    if cfg.is_retrain_step(step) {
        let (network, _) = state.network.train(&training_set(&state.samples), &cfg.train, rng)?;
        state.network = network;
        state.snapshots.push(Snapshot {
            step,
            network: state.network.clone(),
            design: state.design.clone(),
        });
    }
    Ok(())
}

/// Warm-up followed by `horizon - warmup` mining steps.
pub fn run<R: Rng + ?Sized>(data: &HistoricalDataset, cfg: &MinerConfig, rng: &mut R) -> Result<MiningResult> {
    let mut state = warmup(data, cfg, rng)?;
    while state.step < cfg.horizon {
        mining_step(&mut state, data, cfg, rng)?;
    }
    Ok(MiningResult {
        samples: state.samples,
        ensemble: EnsembleModel::new(state.snapshots, cfg.rr_threshold, cfg.lcb_multiplier),
        trace: state.trace,
    })
}
