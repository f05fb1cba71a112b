//! Restricted master problem of the set covering formulation.
//!
//! The pool always starts with one artificial column per row (cost [`BIG`]),
//! which makes every restricted LP feasible and provides the initial basis.
//! Real columns are duties on the time-space network.

mod branch;
pub mod simplex;

use std::collections::HashSet;
use std::time::Duration;

use thiserror::Error;

use crate::graph::{EdgeKind, NodeKind, TimeSpaceGraph, MAX_WORK};
pub use branch::IpSolution;
pub use simplex::LpSolution;
use simplex::{CoveringSimplex, SparseColumn};

/// Cost of an artificial column.
pub const BIG: f64 = 100.0;
/// A column must price below this to enter the pool.
pub const RC_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MasterError {
    #[error("LP numerical failure: {0}")]
    NumericalFailure(String),
    #[error("column with reduced cost {reduced_cost} does not improve the LP")]
    NotImproving { reduced_cost: f64 },
    #[error("no integer cover without artificial columns exists in the pool")]
    PoolInfeasible,
    #[error("invalid duty: {0}")]
    InvalidDuty(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    /// Edge ids from Source to Sink/Deadhead; empty for artificial columns.
    pub edge_path: Vec<usize>,
    /// Covered rows, ascending.
    pub rows: Vec<usize>,
    pub cost: f64,
    pub artificial: bool,
}

impl Column {
    pub fn artificial(row: usize) -> Self {
        Column {
            edge_path: Vec::new(),
            rows: vec![row],
            cost: BIG,
            artificial: true,
        }
    }

    /// Non-artificial column given directly by its rows, without a path.
    pub fn from_rows(mut rows: Vec<usize>, cost: f64) -> Self {
        rows.sort_unstable();
        rows.dedup();
        Column {
            edge_path: Vec::new(),
            rows,
            cost,
            artificial: false,
        }
    }

    /// Builds the column of a duty, checking that the path is a legal duty.
    pub fn from_path(g: &TimeSpaceGraph, edge_path: Vec<usize>) -> Result<Self, MasterError> {
        check_duty(g, &edge_path).map_err(MasterError::InvalidDuty)?;
        let mut rows: Vec<usize> = edge_path
            .iter()
            .filter_map(|&e| g.row_of(g.edge(e).head))
            .collect();
        rows.sort_unstable();
        let cost = edge_path.iter().map(|&e| g.edge(e).fixed_cost).sum();
        Ok(Column {
            edge_path,
            rows,
            cost,
            artificial: false,
        })
    }
}

/// Checks that `path` is a connected Source→Sink/Deadhead duty within the
/// working-time cap.
pub fn check_duty(g: &TimeSpaceGraph, path: &[usize]) -> Result<(), String> {
    if path.len() < 2 {
        return Err(format!("path of {} edges is too short", path.len()));
    }
    let first = g.edge(path[0]);
    if first.kind != EdgeKind::SignIn || g.node(first.tail).kind != NodeKind::Source {
        return Err("duty must start with a sign-in edge".into());
    }
    let last = g.edge(*path.last().unwrap());
    if !matches!(last.kind, EdgeKind::SignOff | EdgeKind::DeadheadEdge) {
        return Err("duty must end with a sign-off or deadhead edge".into());
    }
    for (i, w) in path.windows(2).enumerate() {
        let (a, b) = (g.edge(w[0]), g.edge(w[1]));
        if a.head != b.tail {
            return Err(format!("edges {} and {} are not consecutive", a.id, b.id));
        }
        if i + 2 < path.len() && b.kind != EdgeKind::Connection {
            return Err(format!("edge {} inside the duty is not a connection", b.id));
        }
    }
    let work: u32 = path.iter().map(|&e| g.edge(e).time_use).sum();
    if work > MAX_WORK {
        return Err(format!("working time {work} exceeds {MAX_WORK}"));
    }
    Ok(())
}

/// `c_j - sum_{i in rows(j)} u_i`
pub fn reduced_cost(col: &Column, duals: &[f64]) -> f64 {
    col.cost - col.rows.iter().map(|&i| duals[i]).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct RmpState {
    m: usize,
    columns: Vec<Column>,
    lp: CoveringSimplex,
    seen: HashSet<Vec<usize>>,
    last: Option<LpSolution>,
}

/// Initial pool for `g`: one artificial column per trip.
pub fn init_pool(g: &TimeSpaceGraph) -> RmpState {
    RmpState::new(g.num_rows())
}

impl RmpState {
    pub fn new(m: usize) -> Self {
        let columns: Vec<Column> = (0..m).map(Column::artificial).collect();
        let lp = CoveringSimplex::new(m, columns.iter().map(sparse).collect());
        RmpState {
            m,
            columns,
            lp,
            seen: HashSet::new(),
            last: None,
        }
    }

    /// Pool made of the artificial columns followed by `cols`, without the
    /// reduced-cost check of [`RmpState::add_columns`].
    pub fn with_columns(m: usize, cols: Vec<Column>) -> Self {
        let mut state = RmpState::new(m);
        for col in cols {
            state.push(col);
        }
        state
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Most recent LP solution, if any.
    pub fn solution(&self) -> Option<&LpSolution> {
        self.last.as_ref()
    }

    pub fn duals(&self) -> Option<&[f64]> {
        self.last.as_ref().map(|s| s.duals.as_slice())
    }

    pub fn total_pivots(&self) -> usize {
        self.lp.total_pivots
    }

    /// Re-optimizes the LP over the current pool, warm-started from the last basis.
    pub fn lp_solve(&mut self) -> Result<&LpSolution, MasterError> {
        let sol = self.lp.solve()?;
        self.last = Some(sol);
        Ok(self.last.as_ref().unwrap())
    }

    fn key(col: &Column) -> Vec<usize> {
        if col.edge_path.is_empty() {
            // path-less columns are keyed by cost and rows, offset to avoid clashing with edge ids
            let mut key = vec![usize::MAX, col.cost.to_bits() as usize];
            key.extend(col.rows.iter().map(|&r| usize::MAX - 1 - r));
            key
        } else {
            col.edge_path.clone()
        }
    }

    fn push(&mut self, col: Column) -> bool {
        if !col.artificial && !self.seen.insert(Self::key(&col)) {
            return false;
        }
        self.lp.push_column(sparse(&col));
        self.columns.push(col);
        true
    }

    /// Adds columns priced against the current duals; duplicates are skipped.
    /// Returns how many columns were actually added.
    pub fn add_columns(&mut self, cols: Vec<Column>) -> Result<usize, MasterError> {
        let duals = self.last.as_ref().map(|s| s.duals.clone()).unwrap_or_else(|| vec![0.0; self.m]);
        for col in &cols {
            let rc = reduced_cost(col, &duals);
            if rc >= -RC_TOL {
                return Err(MasterError::NotImproving { reduced_cost: rc });
            }
        }
        let mut added = 0;
        for col in cols {
            if self.push(col) {
                added += 1;
            }
        }
        Ok(added)
    }

    /// Solves the final pool as a binary covering program by branch-and-bound.
    pub fn ip_finish(&mut self, time_limit: Duration) -> Result<IpSolution, MasterError> {
        if self.last.is_none() {
            self.lp_solve()?;
        }
        let root = self.last.as_ref().unwrap();
        branch::solve(self.m, &self.columns, self.lp.clone(), root, time_limit)
    }
}

fn sparse(col: &Column) -> SparseColumn {
    SparseColumn {
        rows: col.rows.clone(),
        cost: col.cost,
    }
}

#[cfg(test)]
mod tests;
