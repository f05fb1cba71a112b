//! Revised simplex for covering LPs `min c'x  s.t.  Ax >= b, x >= 0` with
//! `b` in `{0, 1}`.
//!
//! Rows get surplus variables (`Ax - s = b`). The caller must supply one unit
//! column per row among the first `m` columns (the artificial columns of the
//! master problem); they form the starting basis, so no phase one is needed.
//! Entering variables follow Dantzig's rule until a run of degenerate pivots
//! is seen, after which Bland's rule is used for the rest of the solve.
//!
//! Costs and right-hand sides can be changed between solves. A cost change
//! keeps the basis primal feasible and is repaired by primal simplex; a
//! right-hand-side change keeps it dual feasible and is repaired by dual
//! simplex.
//!
//! Variable numbering: `v < m` is the surplus of row `v`, `v >= m` is column
//! `v - m`. This keeps Bland's ordering stable when columns are appended.

use super::MasterError;

pub const PIVOT_TOL: f64 = 1e-9;
pub const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 256;
const DEGENERATE_RUN: usize = 30;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone)]
pub struct SparseColumn {
    pub rows: Vec<usize>,
    pub cost: f64,
}

/// Basis and factorization, enough to resume from a previous optimum.
#[derive(Debug, Clone)]
pub struct Snapshot {
    basis: Vec<usize>,
    binv: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CoveringSimplex {
    m: usize,
    cols: Vec<SparseColumn>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    // dense row-major inverse of the basis matrix
    binv: Vec<f64>,
    xb: Vec<f64>,
    // duals of the current basis
    y: Vec<f64>,
    pivots_since_refactor: usize,
    pub total_pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    /// Primal value per column.
    pub x: Vec<f64>,
    /// Row duals.
    pub duals: Vec<f64>,
}

impl CoveringSimplex {
    /// `cols[i]` for `i < m` must be the unit column of row `i`.
    pub fn new(m: usize, cols: Vec<SparseColumn>) -> Self {
        assert!(cols.len() >= m, "need one unit column per row");
        for (i, c) in cols.iter().take(m).enumerate() {
            assert_eq!(c.rows, [i], "column {i} must be the unit column of row {i}");
        }
        let mut lp = CoveringSimplex {
            m,
            cols,
            rhs: vec![1.0; m],
            basis: Vec::new(),
            binv: Vec::new(),
            xb: Vec::new(),
            y: Vec::new(),
            pivots_since_refactor: 0,
            total_pivots: 0,
        };
        lp.reset_basis();
        lp
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn num_columns(&self) -> usize {
        self.cols.len()
    }

    pub fn push_column(&mut self, col: SparseColumn) {
        debug_assert!(col.rows.iter().all(|&r| r < self.m));
        self.cols.push(col);
    }

    pub fn column(&self, j: usize) -> &SparseColumn {
        &self.cols[j]
    }

    /// Changes the cost of column `j`; takes effect at the next solve.
    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.cols[j].cost = cost;
    }

    /// Changes the right-hand side of `row`; takes effect at the next solve.
    pub fn set_rhs(&mut self, row: usize, value: f64) {
        assert!(value >= 0.0);
        self.rhs[row] = value;
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            basis: self.basis.clone(),
            binv: self.binv.clone(),
        }
    }

    pub fn restore(&mut self, s: &Snapshot) {
        self.basis.clone_from(&s.basis);
        self.binv.clone_from(&s.binv);
        self.recompute();
    }

    /// Returns to the all-artificial basis, which is primal feasible.
    pub fn reset_basis(&mut self) {
        let m = self.m;
        self.basis = (m..2 * m).collect();
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        self.pivots_since_refactor = 0;
        self.recompute();
    }

    fn var_cost(&self, v: usize) -> f64 {
        if v < self.m {
            0.0
        } else {
            self.cols[v - self.m].cost
        }
    }

    /// Recomputes basic values and duals from the current inverse.
    fn recompute(&mut self) {
        let m = self.m;
        self.xb = (0..m)
            .map(|r| {
                let row = &self.binv[r * m..(r + 1) * m];
                row.iter().zip(&self.rhs).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let mut y = vec![0.0; m];
        for (r, &v) in self.basis.iter().enumerate() {
            let c = self.var_cost(v);
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
        self.y = y;
    }

    fn reduced_cost(&self, v: usize) -> f64 {
        if v < self.m {
            self.y[v]
        } else {
            let c = &self.cols[v - self.m];
            c.cost - c.rows.iter().map(|&i| self.y[i]).sum::<f64>()
        }
    }

    /// Row `r` of `B^-1` times the constraint column of variable `v`.
    fn row_entry(&self, r: usize, v: usize) -> f64 {
        let row = &self.binv[r * self.m..(r + 1) * self.m];
        if v < self.m {
            -row[v]
        } else {
            self.cols[v - self.m].rows.iter().map(|&i| row[i]).sum()
        }
    }

    /// B^-1 a_v
    fn direction(&self, v: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        if v < m {
            for (r, a) in alpha.iter_mut().enumerate() {
                *a = -self.binv[r * m + v];
            }
        } else {
            for &i in &self.cols[v - m].rows {
                for (r, a) in alpha.iter_mut().enumerate() {
                    *a += self.binv[r * m + i];
                }
            }
        }
        alpha
    }

    fn refactor(&mut self) -> Result<(), MasterError> {
        let m = self.m;
        // Gauss-Jordan on [B | I]
        let mut b = vec![0.0f64; m * m];
        for (r, &v) in self.basis.iter().enumerate() {
            if v < m {
                b[v * m + r] = -1.0;
            } else {
                for &i in &self.cols[v - m].rows {
                    b[i * m + r] = 1.0;
                }
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let pivot_row = (col..m)
                .max_by(|&a, &c| b[a * m + col].abs().total_cmp(&b[c * m + col].abs()))
                .unwrap();
            let p = b[pivot_row * m + col];
            if p.abs() < 1e-12 {
                return Err(MasterError::NumericalFailure("singular basis".into()));
            }
            if pivot_row != col {
                for k in 0..m {
                    b.swap(pivot_row * m + k, col * m + k);
                    inv.swap(pivot_row * m + k, col * m + k);
                }
            }
            for k in 0..m {
                b[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = b[r * m + col];
                if f != 0.0 {
                    for k in col..m {
                        b[r * m + k] -= f * b[col * m + k];
                    }
                    for k in 0..m {
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute();
        for x in &mut self.xb {
            if *x < 0.0 && *x > -FEAS_TOL {
                *x = 0.0;
            }
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Exchanges basic row `r` for variable `q` with direction `alpha`.
    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64], d_q: f64) -> Result<(), MasterError> {
        let m = self.m;
        let pr = alpha[r];
        let theta = self.xb[r] / pr;
        for k in 0..m {
            self.binv[r * m + k] /= pr;
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for (i, row) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let k = if i < r { i } else { i + 1 };
            let f = alpha[k];
            if f != 0.0 {
                for (a, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *a -= f * p;
                }
            }
        }
        for (yk, p) in self.y.iter_mut().zip(pivot_row.iter()) {
            *yk += d_q * p;
        }
        for k in 0..m {
            if k != r {
                self.xb[k] -= theta * alpha[k];
            }
        }
        self.xb[r] = theta;
        self.basis[r] = q;
        self.total_pivots += 1;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn primal_feasible(&self) -> bool {
        self.xb.iter().all(|&x| x >= -FEAS_TOL)
    }

    fn dual_feasible(&self) -> bool {
        (0..self.m + self.cols.len()).all(|v| self.reduced_cost(v) >= -OPT_TOL)
    }

    /// Primal simplex from a primal feasible basis.
    fn primal(&mut self) -> Result<(), MasterError> {
        let m = self.m;
        let mut bland = false;
        let mut degenerate = 0;
        let mut pivots = 0;
        loop {
            let mut entering: Option<(usize, f64)> = None;
            let n_vars = m + self.cols.len();
            for v in 0..n_vars {
                let d = self.reduced_cost(v);
                if d < -OPT_TOL {
                    if bland {
                        entering = Some((v, d));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| d < best) {
                        entering = Some((v, d));
                    }
                }
            }
            let Some((q, d_q)) = entering else {
                return Ok(());
            };

            let alpha = self.direction(q);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if alpha[r] > PIVOT_TOL {
                    let ratio = self.xb[r].max(0.0) / alpha[r];
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, theta)) = leave else {
                return Err(MasterError::NumericalFailure("unbounded direction".into()));
            };
            self.xb[r] = self.xb[r].max(0.0);
            self.pivot(r, q, &alpha, d_q)?;
            for x in &mut self.xb {
                if *x < 0.0 && *x > -FEAS_TOL {
                    *x = 0.0;
                }
            }

            pivots += 1;
            if theta < 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            if pivots > MAX_PIVOTS {
                return Err(MasterError::NumericalFailure(format!(
                    "no convergence after {MAX_PIVOTS} pivots"
                )));
            }
        }
    }

    /// Dual simplex from a dual feasible basis.
    fn dual(&mut self) -> Result<(), MasterError> {
        let m = self.m;
        let mut pivots = 0;
        let mut bland = false;
        let mut degenerate = 0;
        loop {
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..m {
                let x = self.xb[r];
                if x < -FEAS_TOL {
                    let better = match leaving {
                        None => true,
                        Some((lr, best)) if bland => self.basis[r] < self.basis[lr] && best < 0.0,
                        Some((_, best)) => x < best,
                    };
                    if better {
                        leaving = Some((r, x));
                    }
                }
            }
            let Some((r, _)) = leaving else {
                return Ok(());
            };
            let mut entering: Option<(usize, f64, f64)> = None;
            for v in 0..m + self.cols.len() {
                let a = self.row_entry(r, v);
                if a < -PIVOT_TOL {
                    let ratio = self.reduced_cost(v).max(0.0) / -a;
                    let better = match entering {
                        None => true,
                        Some((_, best, _)) => ratio < best - 1e-12,
                    };
                    if better {
                        entering = Some((v, ratio, a));
                    }
                }
            }
            let Some((q, step, _)) = entering else {
                return Err(MasterError::NumericalFailure("dual unbounded".into()));
            };
            let d_q = self.reduced_cost(q);
            let alpha = self.direction(q);
            self.pivot(r, q, &alpha, d_q)?;
            pivots += 1;
            if step < 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            if pivots > MAX_PIVOTS {
                return Err(MasterError::NumericalFailure(format!(
                    "no convergence after {MAX_PIVOTS} dual pivots"
                )));
            }
        }
    }

    /// Optimizes from the current basis after cost or right-hand-side
    /// changes, falling back to the artificial basis when the current one is
    /// neither primal nor dual feasible.
    pub fn solve(&mut self) -> Result<LpSolution, MasterError> {
        self.recompute();
        if !self.primal_feasible() {
            if self.dual_feasible() {
                if self.dual().is_err() {
                    self.reset_basis();
                }
            } else {
                self.reset_basis();
            }
        }
        if !self.primal_feasible() {
            self.reset_basis();
        }
        self.primal()?;
        Ok(self.solution())
    }

    fn solution(&self) -> LpSolution {
        let m = self.m;
        let mut x = vec![0.0; self.cols.len()];
        let mut objective = 0.0;
        for (r, &v) in self.basis.iter().enumerate() {
            if v >= m {
                let value = self.xb[r].max(0.0);
                x[v - m] = value;
                objective += self.cols[v - m].cost * value;
            }
        }
        LpSolution {
            objective,
            x,
            duals: self.y.clone(),
        }
    }
}
