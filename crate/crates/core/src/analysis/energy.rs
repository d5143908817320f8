//! Singular-value energy and the minimum token count that keeps a given
//! share of it.

use serde::Serialize;

use crate::error::{FoldError, Result};
use crate::linalg::{svd, Matrix};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// `E(k)` for `k = 1..=len`, stored at index `k − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyCurve {
    values: Vec<f64>,
    rank: usize,
}

impl EnergyCurve {
    /// `E(k)`; `E(0) = 0` and anything past the end is 1.
    pub fn at(&self, k: usize) -> f64 {
        match k {
            0 => 0.0,
            k if k > self.values.len() => 1.0,
            k => self.values[k - 1],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Numerical rank under [`RANK_CUTOFF`].
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Smallest `k` with `E(k) ≥ t`.
    pub fn min_k(&self, t: f64) -> Result<usize> {
        check_threshold(t)?;
        Ok(self
            .values
            .iter()
            .position(|&e| e >= t)
            .map_or(self.rank, |i| i + 1))
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(FoldError::argument(format!(
            "energy threshold {t} outside (0, 1]"
        )));
    }
    Ok(())
}

pub fn energy(sigma: &[f64]) -> Result<EnergyCurve> {
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(FoldError::domain(
            "singular values must be finite and nonnegative",
        ));
    }
    if sigma.windows(2).any(|w| w[1] > w[0]) {
        return Err(FoldError::domain("singular values must be nonincreasing"));
    }
    let Some(&top) = sigma.first().filter(|s| **s > 0.0) else {
        return Err(FoldError::domain("all singular values are zero"));
    };
    let rank = sigma
        .iter()
        .take_while(|s| **s >= RANK_CUTOFF * top)
        .count();
    let mut prefix = Vec::with_capacity(sigma.len());
    let mut acc = 0.0;
    for s in &sigma[..rank] {
        acc += s;
        prefix.push(acc);
    }
    let total = acc;
    let mut values: Vec<f64> = prefix.iter().map(|p| p / total).collect();
    values.resize(sigma.len(), 1.0);
    Ok(EnergyCurve { values, rank })
}

pub fn min_tokens(x: &Matrix, t: f64) -> Result<usize> {
    check_threshold(t)?;
    energy(&svd(x)?.sigma)?.min_k(t)
}

/// Minimum token counts per block (rows) and threshold (columns).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyProfile {
    pub thresholds: Vec<f64>,
    pub per_block_k: Vec<Vec<usize>>,
}

impl EnergyProfile {
    pub fn column(&self, t_index: usize) -> Vec<usize> {
        self.per_block_k.iter().map(|row| row[t_index]).collect()
    }
}

/// Applies every threshold to one SVD of `x`.
pub fn min_tokens_many(x: &Matrix, thresholds: &[f64]) -> Result<Vec<usize>> {
    for &t in thresholds {
        check_threshold(t)?;
    }
    let curve = energy(&svd(x)?.sigma)?;
    thresholds.iter().map(|&t| curve.min_k(t)).collect()
}
