//! Linear least squares with optional equality constraints.
//!
//! The normal equations are factored by an envelope (skyline) Cholesky after a
//! reverse Cuthill-McKee reordering. Constraints are folded in through an
//! augmented-Lagrangian shift, which keeps the factor positive definite when
//! the constraints are what removes a gauge freedom, followed by a small dense
//! Schur complement for the multipliers.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A sparse linear row `sum_k a_k x_{i_k} = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Minimize `sum_r (a_r . x - b_r)^2` subject to `C x = d`.
#[derive(Clone, Debug, Default)]
pub struct SparseLsqProblem {
    unknowns: usize,
    rows: Vec<LinearRow>,
    constraints: Vec<LinearRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsqSolution {
    pub x: Vec<f64>,
    /// Lagrange multipliers, one per constraint, for `N x + C^T y = A^T b`.
    pub multipliers: Vec<f64>,
}

impl SparseLsqProblem {
    pub fn new(unknowns: usize) -> Self {
        SparseLsqProblem {
            unknowns,
            rows: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn unknowns(&self) -> usize {
        self.unknowns
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn constraints(&self) -> &[LinearRow] {
        &self.constraints
    }

    fn check(&self, entries: &[(usize, f64)], rhs: f64) -> Result<()> {
        for &(i, a) in entries {
            if i >= self.unknowns {
                return Err(Error::InvalidProblem(format!(
                    "unknown index {i} out of range ({} unknowns)",
                    self.unknowns
                )));
            }
            if !a.is_finite() {
                return Err(Error::InvalidProblem(format!("non-finite coefficient on unknown {i}")));
            }
        }
        if !rhs.is_finite() {
            return Err(Error::InvalidProblem("non-finite right-hand side".into()));
        }
        Ok(())
    }

    /// Adds the residual `weight * (a . x - rhs)`.
    pub fn add_row(&mut self, weight: f64, entries: &[(usize, f64)], rhs: f64) -> Result<()> {
        let entries: Vec<(usize, f64)> = entries.iter().map(|&(i, a)| (i, a * weight)).collect();
        let rhs = rhs * weight;
        self.check(&entries, rhs)?;
        if entries.iter().all(|e| e.1 == 0.0) && rhs == 0.0 {
            return Ok(());
        }
        self.rows.push(LinearRow { entries, rhs });
        Ok(())
    }

    pub fn add_constraint(&mut self, entries: &[(usize, f64)], rhs: f64) -> Result<()> {
        self.check(entries, rhs)?;
        self.constraints.push(LinearRow {
            entries: entries.to_vec(),
            rhs,
        });
        Ok(())
    }

    /// Sum of squared residuals at `x`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let v: f64 = r.entries.iter().map(|&(i, a)| a * x[i]).sum::<f64>() - r.rhs;
                v * v
            })
            .sum()
    }

    fn dense_parts(&self) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let n = self.unknowns;
        let mut nm = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for r in &self.rows {
            for &(i, a) in &r.entries {
                b[i] += a * r.rhs;
                for &(j, c) in &r.entries {
                    nm[(i, j)] += a * c;
                }
            }
        }
        let m = self.constraints.len();
        let mut c = DMatrix::zeros(m, n);
        let mut d = DVector::zeros(m);
        for (k, r) in self.constraints.iter().enumerate() {
            for &(i, a) in &r.entries {
                c[(k, i)] += a;
            }
            d[k] = r.rhs;
        }
        (nm, b, c, d)
    }
}

/// Relative violation of the optimality conditions: stationarity
/// `N x + C^T y - A^T b` and feasibility `C x - d`, each scaled by the
/// magnitudes involved.
pub fn kkt_residual(problem: &SparseLsqProblem, sol: &LsqSolution) -> f64 {
    let (nm, b, c, d) = problem.dense_parts();
    let x = DVector::from_column_slice(&sol.x);
    let y = DVector::from_column_slice(&sol.multipliers);
    let nx = &nm * &x;
    let cty = c.transpose() * &y;
    let stat = (&nx + &cty - &b).amax();
    let stat_scale = b.amax().max(nx.amax()).max(cty.amax()).max(1e-300);
    let cx = &c * &x;
    let feas = if d.is_empty() {
        0.0
    } else {
        (&cx - &d).amax() / d.amax().max(cx.amax()).max(1.0)
    };
    (stat / stat_scale.max(1.0)).max(feas)
}

/// Symmetric matrix in compressed lower-triangular rows (column indices
/// ascending, diagonal last).
struct SymSparse {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymSparse {
    fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_unstable_by_key(|t| (t.0, t.1));
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in trip {
            let row = &mut rows[i];
            match row.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => row.push((j, v)),
            }
        }
        SymSparse { n, rows }
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                if j != i && v != 0.0 {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }
}

/// Reverse Cuthill-McKee ordering; `perm[k]` is the original index placed at
/// position `k`. Ties break on index so the result is deterministic.
fn rcm_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize| -> Vec<usize> {
        let mut level = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        level[start] = 0;
        while let Some(u) = q.pop_front() {
            for &w in &adj[u] {
                if level[w] == usize::MAX {
                    level[w] = level[u] + 1;
                    q.push_back(w);
                }
            }
        }
        level
    };
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start: repeatedly jump to a min-degree node of the
        // deepest BFS level while eccentricity grows
        let mut start = seed;
        let mut ecc = 0;
        for _ in 0..8 {
            let level = bfs_levels(start);
            let depth = level.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
            if depth <= ecc && start != seed {
                break;
            }
            ecc = depth;
            let next = (0..n)
                .filter(|&v| level[v] == depth)
                .min_by_key(|&v| (deg[v], v))
                .unwrap_or(start);
            if next == start {
                break;
            }
            start = next;
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut nb: Vec<usize> = adj[u].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_unstable_by_key(|&w| (deg[w], w));
            for w in nb {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A P^T = L L^T`.
struct Skyline {
    perm: Vec<usize>,
    first: Vec<usize>,
    /// Row `i` holds columns `first[i]..=i`.
    rows: Vec<Vec<f64>>,
}

impl Skyline {
    fn factor(a: &SymSparse, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, row) in a.rows.iter().enumerate() {
            for &(j, _) in row {
                let (pi, pj) = (inv[i], inv[j]);
                let (hi, lo) = if pi >= pj { (pi, pj) } else { (pj, pi) };
                first[hi] = first[hi].min(lo);
            }
        }
        let mut rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; i - first[i] + 1]).collect();
        let mut diag_max = 0.0f64;
        for (i, row) in a.rows.iter().enumerate() {
            for &(j, v) in row {
                let (pi, pj) = (inv[i], inv[j]);
                let (hi, lo) = if pi >= pj { (pi, pj) } else { (pj, pi) };
                rows[hi][lo - first[hi]] += v;
                if i == j {
                    diag_max = diag_max.max(v.abs());
                }
            }
        }
        let orig_diag: Vec<f64> = (0..n).map(|i| rows[i][i - first[i]]).collect();
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = rows[i][j - fi];
                if k0 < j {
                    let (ri, rj) = (&rows[i][k0 - fi..j - fi], &rows[j][k0 - fj..j - fj]);
                    s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                }
                if j < i {
                    let d = rows[j][j - fj];
                    rows[i][j - fi] = s / d;
                } else {
                    let tol = 1e-10 * orig_diag[i].abs().max(1e-300 * diag_max);
                    if !(s > tol) || orig_diag[i] <= 1e-14 * diag_max {
                        return Err(Error::singular(format!(
                            "pivot {s:.3e} at unknown {} (diagonal {:.3e})",
                            perm[i], orig_diag[i]
                        )));
                    }
                    rows[i][i - fi] = s.sqrt();
                }
            }
        }
        Ok(Skyline { perm, first, rows })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.rows[i];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.rows[i];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, a) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= a * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

/// Solves the (constrained) least-squares problem. Deterministic for a given
/// problem: assembly, ordering and factorization have no data-dependent
/// nondeterminism.
pub fn solve_lsq(problem: &SparseLsqProblem) -> Result<LsqSolution> {
    let n = problem.unknowns;
    if n == 0 {
        return Ok(LsqSolution {
            x: Vec::new(),
            multipliers: vec![0.0; problem.constraints.len()],
        });
    }
    let mut trip = Vec::new();
    let mut b = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for r in &problem.rows {
        for &(i, a) in &r.entries {
            b[i] += a * r.rhs;
            diag[i] += a * a;
            for &(j, c) in &r.entries {
                if j <= i {
                    trip.push((i, j, a * c));
                }
            }
        }
    }

    // augmented-Lagrangian shift: mu C^T C has the magnitude of the data
    let m = problem.constraints.len();
    let mu = {
        let mean_diag = diag.iter().sum::<f64>() / n as f64;
        let mean_c = problem
            .constraints
            .iter()
            .map(|r| r.entries.iter().map(|e| e.1 * e.1).sum::<f64>())
            .sum::<f64>()
            / m.max(1) as f64;
        if mean_c > 0.0 {
            mean_diag.max(1e-12) / mean_c
        } else {
            0.0
        }
    };
    let mut bshift = b.clone();
    for r in &problem.constraints {
        for &(i, a) in &r.entries {
            bshift[i] += mu * a * r.rhs;
            for &(j, c) in &r.entries {
                if j <= i {
                    trip.push((i, j, mu * a * c));
                }
            }
        }
    }
    let shifted = SymSparse::from_triplets(n, trip);
    let perm = rcm_order(&shifted.adjacency());
    let factor = Skyline::factor(&shifted, perm)?;

    let cmat: Vec<Vec<(usize, f64)>> = problem.constraints.iter().map(|r| r.entries.clone()).collect();
    let dot_c = |row: &[(usize, f64)], x: &[f64]| row.iter().map(|&(i, a)| a * x[i]).sum::<f64>();

    // Z = K^-1 C^T and the Schur complement S = C Z
    let z: Vec<Vec<f64>> = cmat
        .iter()
        .map(|row| {
            let mut e = vec![0.0; n];
            for &(i, a) in row {
                e[i] += a;
            }
            factor.solve(&e)
        })
        .collect();
    let schur = if m > 0 {
        let s = DMatrix::from_fn(m, m, |i, j| dot_c(&cmat[i], &z[j]));
        let lu = s.clone().lu();
        let scale = s.amax().max(1e-300);
        let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if !(min_pivot > 1e-10 * scale) {
            return Err(Error::singular("equality constraints are redundant or inconsistent"));
        }
        Some(lu)
    } else {
        None
    };

    // solve K x + C^T y = g, C x = h
    let kkt_solve = |g: &[f64], h: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let x0 = factor.solve(g);
        match &schur {
            None => (x0, Vec::new()),
            Some(lu) => {
                let r = DVector::from_fn(m, |k, _| dot_c(&cmat[k], &x0) - h[k]);
                let y = lu.solve(&r).unwrap_or_else(|| DVector::zeros(m));
                let mut x = x0;
                for (k, zk) in z.iter().enumerate() {
                    for (xi, zi) in x.iter_mut().zip(zk) {
                        *xi -= y[k] * zi;
                    }
                }
                (x, y.iter().copied().collect())
            }
        }
    };
    let d: Vec<f64> = problem.constraints.iter().map(|r| r.rhs).collect();
    let (mut x, mut y) = kkt_solve(&bshift, &d);

    // one step of iterative refinement on the shifted system
    let kx = shifted.mul(&x);
    let mut g = bshift.clone();
    for (gi, kxi) in g.iter_mut().zip(&kx) {
        *gi -= kxi;
    }
    for (k, row) in cmat.iter().enumerate() {
        for &(i, a) in row {
            g[i] -= a * y[k];
        }
    }
    let h: Vec<f64> = cmat.iter().zip(&d).map(|(row, dk)| dk - dot_c(row, &x)).collect();
    let (dx, dy) = kkt_solve(&g, &h);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    for (yi, di) in y.iter_mut().zip(&dy) {
        *yi += di;
    }

    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::singular("non-finite solution"));
    }
    // the shift contributes mu C^T (C x - d) = 0 at a feasible x, so these are
    // also the multipliers of the unshifted system
    Ok(LsqSolution { x, multipliers: y })
}
