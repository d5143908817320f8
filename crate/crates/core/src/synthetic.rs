//! Synthetic token sequences standing in for real patch activations.
//!
//! Draw order from [`SeededRng`]: a shared latent `s` (`d` standard
//! normals), then the noise rows `z_i` row-major. Row `i` is
//! `c · s + (1 − c) · z_i`, so `c = 0` gives independent rows and `c → 1`
//! collapses the sequence toward a single direction.

use crate::error::{FoldError, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::tokenseq::TokenSequence;

pub fn generate(seed: u64, n: usize, d: usize, correlation: f64) -> Result<TokenSequence> {
    if n == 0 || d == 0 {
        return Err(FoldError::argument(format!(
            "need n ≥ 1 and d ≥ 1, got n={n}, d={d}"
        )));
    }
    if !(0.0..1.0).contains(&correlation) {
        return Err(FoldError::argument(format!(
            "correlation {correlation} outside [0, 1)"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let shared: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for s in &shared {
            data.push(correlation * s + (1.0 - correlation) * rng.standard_normal());
        }
    }
    TokenSequence::new(Matrix::new(n, d, data)?, 0)
}
