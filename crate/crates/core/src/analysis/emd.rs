//! Exact earth mover's distance by the network simplex method on the
//! complete bipartite transportation graph.
//!
//! The basis is a spanning tree over the `n + k` supply and demand nodes,
//! started from the north-west corner rule. Each pivot prices every
//! non-basic cell with node potentials, brings in the most negative reduced
//! cost (lowest cell index on ties), pushes flow around the cycle it closes
//! and drops the lowest-index blocking cell. After a run of degenerate
//! pivots the entering rule falls back to Bland's (first negative cell in
//! index order) until flow moves again, which rules out cycling.

use serde::Serialize;

use crate::error::{FoldError, Result};
use crate::linalg::Matrix;

/// Marginal sums must match 1 to within this.
pub const WEIGHT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct TransportPlan {
    /// `n × k` coupling.
    pub gamma: Matrix,
    pub cost: f64,
    pub source_weights: Vec<f64>,
    pub target_weights: Vec<f64>,
    pub pivots: usize,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.gamma.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.gamma.cols()];
        for r in self.gamma.row_iter() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    /// Plan as CSV, one row per source point.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in self.gamma.row_iter() {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Euclidean ground-distance matrix between the rows of `a` and `b`.
pub fn cost_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(FoldError::shape(format!(
            "point dims differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let mut data = Vec::with_capacity(a.rows() * b.rows());
    for p in a.row_iter() {
        for q in b.row_iter() {
            data.push(
                p.iter()
                    .zip(q)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    Ok(Matrix::from_raw(a.rows(), b.rows(), data))
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// EMD between two weighted point clouds (rows are points). `None`
/// weights mean uniform.
pub fn emd(
    source_points: &Matrix,
    target_points: &Matrix,
    source_weights: Option<&[f64]>,
    target_weights: Option<&[f64]>,
) -> Result<TransportPlan> {
    let a = source_weights
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| uniform_weights(source_points.rows()));
    let b = target_weights
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| uniform_weights(target_points.rows()));
    let cost = cost_matrix(source_points, target_points)?;
    emd_with_costs(&cost, &a, &b)
}

/// Optimal transport for an explicit `n × k` cost matrix.
pub fn emd_with_costs(cost: &Matrix, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    let (n, k) = (cost.rows(), cost.cols());
    if a.len() != n || b.len() != k {
        return Err(FoldError::shape(format!(
            "weights of length {}/{} for a {n}x{k} cost matrix",
            a.len(),
            b.len()
        )));
    }
    check_weights(a, "source")?;
    check_weights(b, "target")?;
    if cost.data().iter().any(|c| !c.is_finite()) {
        return Err(FoldError::domain("cost matrix has non-finite entries"));
    }
    let mut solver = Simplex::new(cost, a, b);
    solver.solve();
    Ok(solver.into_plan(cost, a, b))
}

fn check_weights(w: &[f64], side: &str) -> Result<()> {
    if w.is_empty() {
        return Err(FoldError::argument(format!("{side} point set is empty")));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(FoldError::argument(format!(
            "{side} weights must be finite and nonnegative"
        )));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > WEIGHT_TOL {
        return Err(FoldError::argument(format!(
            "{side} weights sum to {s}, expected 1"
        )));
    }
    Ok(())
}

const NONE: usize = usize::MAX;

struct Simplex<'a> {
    n: usize,
    k: usize,
    cost: &'a Matrix,
    /// Basic cells as `(row, col)`; always `n + k − 1` of them.
    basic: Vec<(usize, usize)>,
    flow: Vec<f64>,
    is_basic: Vec<bool>,
    // Tree scratch, rebuilt every pivot. Nodes: rows `0..n`, cols `n..n+k`.
    adj: Vec<Vec<usize>>,
    parent_edge: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    pivots: usize,
    tol: f64,
}

impl<'a> Simplex<'a> {
    fn new(cost: &'a Matrix, a: &[f64], b: &[f64]) -> Self {
        let (n, k) = (cost.rows(), cost.cols());
        let mut basic = Vec::with_capacity(n + k - 1);
        let mut flow = Vec::with_capacity(n + k - 1);
        let mut supply = a.to_vec();
        let mut demand = b.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let q = supply[i].min(demand[j]);
            basic.push((i, j));
            flow.push(q);
            supply[i] -= q;
            demand[j] -= q;
            if i == n - 1 && j == k - 1 {
                break;
            }
            if j == k - 1 || (i < n - 1 && supply[i] <= demand[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut is_basic = vec![false; n * k];
        for &(i, j) in &basic {
            is_basic[i * k + j] = true;
        }
        let scale = cost.data().iter().fold(0.0f64, |m, c| m.max(c.abs()));
        Simplex {
            n,
            k,
            cost,
            basic,
            flow,
            is_basic,
            adj: vec![Vec::new(); n + k],
            parent_edge: vec![NONE; n + k],
            parent: vec![NONE; n + k],
            depth: vec![0; n + k],
            potential: vec![0.0; n + k],
            pivots: 0,
            tol: 1e-12 * (1.0 + scale),
        }
    }

    /// Potentials with `u_row0 = 0` and `u_i + v_j = c_ij` on basic cells.
    fn rebuild_tree(&mut self) {
        let (n, k) = (self.n, self.k);
        for l in &mut self.adj {
            l.clear();
        }
        for (e, &(i, j)) in self.basic.iter().enumerate() {
            self.adj[i].push(e);
            self.adj[n + j].push(e);
        }
        self.parent_edge.iter_mut().for_each(|p| *p = NONE);
        self.parent.iter_mut().for_each(|p| *p = NONE);
        let mut stack = vec![0usize];
        self.depth[0] = 0;
        self.potential[0] = 0.0;
        self.parent[0] = 0;
        let mut visited = 1;
        while let Some(node) = stack.pop() {
            for idx in 0..self.adj[node].len() {
                let e = self.adj[node][idx];
                let (i, j) = self.basic[e];
                let other = if node < n { n + j } else { i };
                if self.parent[other] != NONE {
                    continue;
                }
                self.parent[other] = node;
                self.parent_edge[other] = e;
                self.depth[other] = self.depth[node] + 1;
                let c = self.cost.get(i, j);
                self.potential[other] = c - self.potential[node];
                visited += 1;
                stack.push(other);
            }
        }
        debug_assert_eq!(visited, n + k, "basis is not a spanning tree");
    }

    fn solve(&mut self) {
        let (n, k) = (self.n, self.k);
        let mut degenerate_run = 0usize;
        let bland_after = 2 * (n + k);
        loop {
            self.rebuild_tree();
            let bland = degenerate_run > bland_after;
            let mut entering = None;
            let mut best = -self.tol;
            'scan: for i in 0..n {
                let u = self.potential[i];
                let row = self.cost.row(i);
                for (j, &c) in row.iter().enumerate() {
                    if self.is_basic[i * k + j] {
                        continue;
                    }
                    let rc = c - u - self.potential[n + j];
                    if rc < best {
                        entering = Some((i, j));
                        if bland {
                            break 'scan;
                        }
                        best = rc;
                    }
                }
            }
            let Some((ei, ej)) = entering else { return };
            let theta = self.pivot(ei, ej);
            self.pivots += 1;
            if theta > 0.0 {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
        }
    }

    /// Brings cell `(ei, ej)` into the basis and returns the flow pushed.
    fn pivot(&mut self, ei: usize, ej: usize) -> f64 {
        let (n, k) = (self.n, self.k);
        // Walk both endpoints up to their common ancestor. Edges on the
        // column side of the cycle alternate −,+,−… starting from the
        // column; on the row side they alternate −,+,… starting from the row.
        let mut path_col: Vec<usize> = Vec::new();
        let mut path_row: Vec<usize> = Vec::new();
        let (mut x, mut y) = (n + ej, ei);
        while self.depth[x] > self.depth[y] {
            path_col.push(self.parent_edge[x]);
            x = self.parent[x];
        }
        while self.depth[y] > self.depth[x] {
            path_row.push(self.parent_edge[y]);
            y = self.parent[y];
        }
        while x != y {
            path_col.push(self.parent_edge[x]);
            x = self.parent[x];
            path_row.push(self.parent_edge[y]);
            y = self.parent[y];
        }
        // Orientation of each cycle edge: true when it gains flow.
        let mut cycle: Vec<(usize, bool)> = Vec::with_capacity(path_col.len() + path_row.len());
        for (s, &e) in path_col.iter().enumerate() {
            cycle.push((e, s % 2 == 1));
        }
        for (s, &e) in path_row.iter().enumerate() {
            cycle.push((e, s % 2 == 1));
        }

        let mut theta = f64::INFINITY;
        let mut leaving = NONE;
        let mut leaving_cell = usize::MAX;
        for &(e, gains) in &cycle {
            if gains {
                continue;
            }
            let f = self.flow[e];
            let (i, j) = self.basic[e];
            let cell = i * k + j;
            if f < theta || (f == theta && cell < leaving_cell) {
                theta = f;
                leaving = e;
                leaving_cell = cell;
            }
        }
        let theta = theta.max(0.0);
        for &(e, gains) in &cycle {
            if gains {
                self.flow[e] += theta;
            } else {
                self.flow[e] = (self.flow[e] - theta).max(0.0);
            }
        }
        let (li, lj) = self.basic[leaving];
        self.is_basic[li * k + lj] = false;
        self.is_basic[ei * k + ej] = true;
        self.basic[leaving] = (ei, ej);
        self.flow[leaving] = theta;
        theta
    }

    fn into_plan(self, cost: &Matrix, a: &[f64], b: &[f64]) -> TransportPlan {
        let mut gamma = Matrix::zeros(self.n, self.k);
        let mut total = 0.0;
        for (&(i, j), &f) in self.basic.iter().zip(&self.flow) {
            gamma.set(i, j, f);
            total += f * cost.get(i, j);
        }
        TransportPlan {
            gamma,
            cost: total,
            source_weights: a.to_vec(),
            target_weights: b.to_vec(),
            pivots: self.pivots,
        }
    }
}
