use thiserror::Error;

/// Errors raised by the mining engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("relative risk undefined: c = {c}, a + b = {exposed}")]
    UndefinedRelativeRisk { c: u64, exposed: u64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("drug index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: u32, dim: usize },
    #[error("duplicate drug index {0}")]
    DuplicateIndex(u32),
    #[error("duplicate combination in dataset at entry {0}")]
    DuplicateCombination(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("combination not found in dataset")]
    CombinationNotFound,
    #[error("empty pattern list")]
    EmptyPatterns,
    #[error("empty training data")]
    EmptyTrainingData,
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("retry cap of {0} attempts exceeded")]
    RetryCapExceeded(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
