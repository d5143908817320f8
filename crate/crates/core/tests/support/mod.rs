//! Reference implementations used only by the integration tests. None of
//! them share code with the library paths they check.

#![allow(dead_code, clippy::needless_range_loop)]

/// Minimum of `Σ c_ij γ_ij` over couplings with row sums `a` and column
/// sums `b`, by a dense two-phase tableau simplex with Bland's rule.
///
/// The last column constraint is dropped as redundant, so the system has
/// full row rank and phase I can always drive the artificials out.
pub fn lp_transport_cost(cost: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let k = b.len();
    let vars = n * k;
    let rows = n + k - 1;
    // Tableau columns: structural vars, artificial vars, rhs.
    let width = vars + rows + 1;
    let mut t = vec![vec![0.0; width]; rows];
    for i in 0..n {
        for j in 0..k {
            t[i][i * k + j] = 1.0;
        }
        t[i][width - 1] = a[i];
    }
    for j in 0..k - 1 {
        let r = n + j;
        for i in 0..n {
            t[r][i * k + j] = 1.0;
        }
        t[r][width - 1] = b[j];
    }
    for (r, row) in t.iter_mut().enumerate() {
        row[vars + r] = 1.0;
    }
    let mut basis: Vec<usize> = (vars..vars + rows).collect();

    // Phase I: minimise the sum of artificials.
    let mut phase1 = vec![0.0; width];
    for c in vars..vars + rows {
        phase1[c] = 1.0;
    }
    run_simplex(&mut t, &mut basis, &phase1, width - 1);
    let infeasibility: f64 = basis
        .iter()
        .zip(&t)
        .filter(|(&bv, _)| bv >= vars)
        .map(|(_, row)| row[width - 1])
        .sum();
    assert!(
        infeasibility < 1e-9,
        "oracle: infeasible transport problem ({infeasibility})"
    );
    // Pivot any zero-level artificials out of the basis.
    for r in 0..rows {
        if basis[r] >= vars {
            if let Some(c) = (0..vars).find(|&c| t[r][c].abs() > 1e-9) {
                pivot(&mut t, &mut basis, r, c);
            }
        }
    }

    // Phase II on structural columns only.
    let mut phase2 = vec![0.0; width];
    for i in 0..n {
        for j in 0..k {
            phase2[i * k + j] = cost[i][j];
        }
    }
    run_simplex(&mut t, &mut basis, &phase2, vars);
    basis
        .iter()
        .zip(&t)
        .filter(|(&bv, _)| bv < vars)
        .map(|(&bv, row)| phase2[bv] * row[width - 1])
        .sum()
}

/// Minimises `obj` using only columns `< allowed` as entering candidates.
fn run_simplex(t: &mut [Vec<f64>], basis: &mut [usize], obj: &[f64], allowed: usize) {
    let width = t[0].len();
    loop {
        // Reduced costs: c_j − c_B · column_j.
        let mut entering = None;
        for c in 0..allowed {
            if basis.contains(&c) {
                continue;
            }
            let mut rc = obj[c];
            for (r, &bv) in basis.iter().enumerate() {
                rc -= obj[bv] * t[r][c];
            }
            if rc < -1e-11 {
                entering = Some(c);
                break; // Bland: lowest index
            }
        }
        let Some(c) = entering else { return };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..t.len() {
            if t[r][c] > 1e-12 {
                let ratio = t[r][width - 1] / t[r][c];
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-14
                            || (ratio <= lratio + 1e-14 && basis[r] < basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let (r, _) = leave.expect("oracle: unbounded transport LP");
        pivot(t, basis, r, c);
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let prow = t[r].clone();
    for (rr, row) in t.iter_mut().enumerate() {
        if rr != r && row[c] != 0.0 {
            let f = row[c];
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
    }
    basis[r] = c;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, sorted descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for kk in 0..n {
                    let (akp, akq) = (a[kk][p], a[kk][q]);
                    a[kk][p] = c * akp - s * akq;
                    a[kk][q] = s * akp + c * akq;
                }
                for kk in 0..n {
                    let (apk, aqk) = (a[p][kk], a[q][kk]);
                    a[p][kk] = c * apk - s * aqk;
                    a[q][kk] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Small xorshift generator so test data does not depend on the library RNG.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn vec(&mut self, len: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..len).map(|_| self.range(lo, hi)).collect()
    }

    /// Random probability vector, occasionally with exact zeros.
    pub fn simplex(&mut self, len: usize) -> Vec<f64> {
        let mut w: Vec<f64> = (0..len)
            .map(|_| {
                if self.below(5) == 0 {
                    0.0
                } else {
                    self.unit() + 0.01
                }
            })
            .collect();
        if w.iter().all(|v| *v == 0.0) {
            w[0] = 1.0;
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        w
    }
}

pub fn euclidean_costs(src: &[Vec<f64>], dst: &[Vec<f64>]) -> Vec<Vec<f64>> {
    src.iter()
        .map(|p| {
            dst.iter()
                .map(|q| {
                    p.iter()
                        .zip(q)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect()
}
