//! Small statistics used by trend checks and data generation tests.

use crate::error::{FoldError, Result};
use crate::linalg::{l2_norm, Matrix};

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(FoldError::shape(format!(
            "spearman needs two equal series of length ≥ 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FoldError::domain(
            "spearman of a constant series is undefined",
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean of `|cos(x_i, x_j)|` over all unordered row pairs.
pub fn mean_abs_pairwise_cosine(x: &Matrix) -> Result<f64> {
    pairwise_cosine(x, true)
}

/// Mean of `cos(x_i, x_j)` over all unordered row pairs.
pub fn mean_pairwise_cosine(x: &Matrix) -> Result<f64> {
    pairwise_cosine(x, false)
}

fn pairwise_cosine(x: &Matrix, abs: bool) -> Result<f64> {
    let n = x.rows();
    if n < 2 {
        return Err(FoldError::shape("pairwise cosine needs at least two rows"));
    }
    let norms: Vec<f64> = x.row_iter().map(l2_norm).collect();
    if norms.contains(&0.0) {
        return Err(FoldError::domain("pairwise cosine with a zero row"));
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let c = crate::linalg::dot(x.row(i), x.row(j)) / (norms[i] * norms[j]);
            acc += if abs { c.abs() } else { c };
        }
    }
    Ok(acc / (n * (n - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn spearman_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(
            spearman(&x, &[10.0, 20.0, 25.0, 100.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
        assert!(spearman(&x, &[1.0; 4]).is_err());
    }

    #[test]
    fn spearman_known_value() {
        // d = rank differences (0, 0, 1, −1, 0) → ρ = 1 − 6·2/(5·24) = 0.9.
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 4.0, 3.0, 5.0]).unwrap();
        assert_abs_diff_eq!(rho, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn cosine_means() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(
            mean_pairwise_cosine(&x).unwrap(),
            -1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            mean_abs_pairwise_cosine(&x).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
    }
}
