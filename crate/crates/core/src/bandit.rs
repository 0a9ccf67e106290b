//! Posterior machinery for neural Thompson sampling with a diagonal design
//! matrix.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::neuralnet::SparseGradient;
use crate::{Error, Result};

/// Diagonal of `U = lambda * I + sum(g g^T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrixDiag {
    diag: Vec<f64>,
    lambda: f64,
}

impl DesignMatrixDiag {
    pub fn new(m: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig("lambda must be > 0"));
        }
        Ok(Self {
            diag: vec![lambda; m],
            lambda,
        })
    }

    /// Restores a snapshot. Every entry must be at least `lambda`.
    pub fn from_parts(diag: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig("lambda must be > 0"));
        }
        if diag.iter().any(|&u| !(u >= lambda)) {
            return Err(Error::InvalidConfig("design diagonal entries must be >= lambda"));
        }
        Ok(Self { diag, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.diag.len() {
            return Err(Error::DimensionMismatch {
                expected: self.diag.len(),
                found: n,
            });
        }
        Ok(())
    }

    /// `diag[i] += grad[i]^2`
    pub fn update(&mut self, grad: &[f64]) -> Result<()> {
        self.check(grad.len())?;
        for (u, g) in self.diag.iter_mut().zip(grad) {
            *u += g * g;
        }
        Ok(())
    }

    pub fn update_sparse(&mut self, grad: &SparseGradient) -> Result<()> {
        if let Some(&bad) = grad.indices.iter().find(|&&i| i >= self.diag.len()) {
            return Err(Error::DimensionMismatch {
                expected: self.diag.len(),
                found: bad + 1,
            });
        }
        for (i, g) in grad.iter() {
            self.diag[i] += g * g;
        }
        Ok(())
    }

    /// `sqrt(lambda * sum(grad[i]^2 / diag[i]))`, with no `1/m` factor.
    pub fn predictive_std(&self, grad: &[f64]) -> Result<f64> {
        self.check(grad.len())?;
        let q: f64 = grad.iter().zip(&self.diag).map(|(g, u)| g * g / u).sum();
        Ok(libm::sqrt(self.lambda * q))
    }

    pub fn predictive_std_sparse(&self, grad: &SparseGradient) -> Result<f64> {
        let mut q = 0.0;
        for (i, g) in grad.iter() {
            let u = self.diag.get(i).ok_or(Error::DimensionMismatch {
                expected: self.diag.len(),
                found: i + 1,
            })?;
            q += g * g / u;
        }
        Ok(libm::sqrt(self.lambda * q))
    }
}

/// Returns `U` with `grad` folded in.
pub fn update_design(u: &DesignMatrixDiag, grad: &[f64]) -> Result<DesignMatrixDiag> {
    let mut next = u.clone();
    next.update(grad)?;
    Ok(next)
}

pub fn predictive_std(u: &DesignMatrixDiag, grad: &[f64]) -> Result<f64> {
    u.predictive_std(grad)
}

/// Normal reward posterior for one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorParams {
    pub mean: f64,
    pub std: f64,
    /// Exploration factor; scales the standard deviation when sampling.
    pub nu: f64,
}

impl PosteriorParams {
    pub fn new(mean: f64, std: f64, nu: f64) -> Self {
        Self { mean, std, nu }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_value(self, rng)
    }

    pub fn lower_bound(&self, k: f64) -> f64 {
        lower_bound(self, k)
    }
}

/// One draw from `Normal(mean, nu * std)`. Returns `mean` exactly, without
/// consuming randomness, when the scaled std is zero.
pub fn sample_value<R: Rng + ?Sized>(p: &PosteriorParams, rng: &mut R) -> f64 {
    let scale = p.nu * p.std;
    if scale == 0.0 {
        return p.mean;
    }
    let z: f64 = StandardNormal.sample(rng);
    p.mean + scale * z
}

/// `mean - k * std`
pub fn lower_bound(p: &PosteriorParams, k: f64) -> f64 {
    p.mean - k * p.std
}
