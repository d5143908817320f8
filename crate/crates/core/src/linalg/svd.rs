//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The taller orientation of the input is orthogonalised column by column;
//! the accumulated rotations form the right singular vectors. For a wide
//! input we decompose the transpose and swap the factors.

use super::{dot, Matrix};
use crate::error::{FoldError, Result};

/// Rotations whose normalised off-diagonal Gram entry is below this are skipped.
const ROTATION_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 60;
/// Singular values at or below `RANK_TOL * sigma_max` get a completed
/// (rather than normalised) left singular vector.
const RANK_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `rows × k` with orthonormal columns.
    pub u: Matrix,
    /// `k = min(rows, cols)` values, nonincreasing and nonnegative.
    pub sigma: Vec<f64>,
    /// `k × cols` with orthonormal rows.
    pub vt: Matrix,
    /// Number of Jacobi sweeps performed.
    pub sweeps: usize,
}

impl SvdResult {
    /// `u · diag(sigma) · vt`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (c, s) in us.row_mut(r).iter_mut().zip(&self.sigma) {
                *c *= s;
            }
        }
        super::matmul(&us, &self.vt).expect("svd factors are conformant")
    }
}

pub fn svd(x: &Matrix) -> Result<SvdResult> {
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(FoldError::domain("svd input contains non-finite entries"));
    }
    if x.rows() >= x.cols() {
        let (u, sigma, v, sweeps) = jacobi_tall(x);
        Ok(SvdResult {
            u,
            sigma,
            vt: v.transpose(),
            sweeps,
        })
    } else {
        // x = (xᵀ)ᵀ = (U Σ Vᵀ)ᵀ = V Σ Uᵀ
        let (u, sigma, v, sweeps) = jacobi_tall(&x.transpose());
        Ok(SvdResult {
            u: v,
            sigma,
            vt: u.transpose(),
            sweeps,
        })
    }
}

/// SVD of an `m × n` matrix with `m ≥ n`. Returns `(U: m×n, sigma, V: n×n, sweeps)`.
fn jacobi_tall(x: &Matrix) -> (Matrix, Vec<f64>, Matrix, usize) {
    let (m, n) = (x.rows(), x.cols());
    // Column-major working copies.
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| x.get(i, j)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: equal singular values keep their column order.
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let cutoff = sigma[0] * RANK_TOL;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if sigma[k] > cutoff && sigma[k] > 0.0 {
            u_cols.push(cols[j].iter().map(|v| v / sigma[k]).collect());
        } else {
            u_cols.push(vec![0.0; m]);
            deficient.push(k);
        }
    }
    complete_basis(&mut u_cols, &deficient);

    let mut u = Matrix::zeros(m, n);
    for (k, col) in u_cols.iter().enumerate() {
        for (i, &val) in col.iter().enumerate().take(m) {
            u.set(i, k, val);
        }
    }
    let mut vm = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        for (i, &val) in v[j].iter().enumerate().take(n) {
            vm.set(i, k, val);
        }
    }
    (u, sigma, vm, sweeps)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Fills the `deficient` columns with unit vectors orthogonal to every
/// other column, drawn deterministically from the standard basis.
fn complete_basis(cols: &mut [Vec<f64>], deficient: &[usize]) {
    if deficient.is_empty() {
        return;
    }
    let m = cols[0].len();
    let mut accepted: Vec<usize> = (0..cols.len()).filter(|k| !deficient.contains(k)).collect();
    let mut candidate = 0;
    for &k in deficient {
        loop {
            assert!(candidate < m, "ran out of basis candidates");
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // Two Gram-Schmidt passes for numerical orthogonality.
            for _ in 0..2 {
                for &a in &accepted {
                    let proj = dot(&e, &cols[a]);
                    for (ei, ai) in e.iter_mut().zip(&cols[a]) {
                        *ei -= proj * ai;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 0.5 {
                cols[k] = e.into_iter().map(|v| v / norm).collect();
                accepted.push(k);
                break;
            }
        }
    }
}
