//! Depth-first branch-and-bound over the final column pool.

use std::rc::Rc;
use std::time::{Duration, Instant};

use super::simplex::{CoveringSimplex, Snapshot};
use super::{Column, LpSolution, MasterError, BIG};

const INT_TOL: f64 = 1e-6;
const ART_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IpSolution {
    /// Pool indices of the chosen columns, ascending.
    pub selected: Vec<usize>,
    pub objective: f64,
    /// Best proven lower bound; equals `objective` when `optimal`.
    pub lower_bound: f64,
    pub optimal: bool,
    pub nodes: usize,
}

impl IpSolution {
    pub fn gap(&self) -> f64 {
        if self.objective.abs() < 1e-12 {
            0.0
        } else {
            (self.objective - self.lower_bound) / self.objective
        }
    }
}

/// Largest step `q` in a short list such that every cost is a multiple of `q`.
/// Integer objectives then move in steps of `q`, which tightens pruning.
fn cost_granularity(costs: impl Iterator<Item = f64> + Clone) -> f64 {
    for q in [1.0, 0.5, 0.25, 0.1, 0.05, 0.01] {
        if costs.clone().all(|c| {
            let k = c / q;
            (k - k.round()).abs() < 1e-9
        }) {
            return q;
        }
    }
    0.0
}

struct Problem<'a> {
    m: usize,
    pool: &'a [Column],
    /// Pool indices of the undominated real columns, the branching candidates.
    cols: Vec<usize>,
    base_cost: Vec<f64>,
    lp: CoveringSimplex,
    granularity: f64,
    deadline: Instant,
    incumbent: Option<(f64, Vec<usize>)>,
    nodes: usize,
}

struct Node {
    fixed_one: Vec<usize>,
    fixed_zero: Vec<usize>,
    bound: f64,
    start: Rc<Snapshot>,
}

enum Outcome {
    Infeasible,
    Integral(f64, Vec<usize>),
    Fractional(f64, usize),
}

/// `lp` must hold the pool's columns in pool order, optionally with a basis
/// to warm-start from.
pub(super) fn solve(
    m: usize,
    pool: &[Column],
    lp: CoveringSimplex,
    root: &LpSolution,
    time_limit: Duration,
) -> Result<IpSolution, MasterError> {
    if pool.iter().zip(&root.x).any(|(c, &x)| c.artificial && x > ART_TOL) {
        return Err(MasterError::PoolInfeasible);
    }
    if root.x.iter().all(|x| (x - x.round()).abs() <= INT_TOL) {
        let selected: Vec<usize> = (0..pool.len()).filter(|&j| root.x[j] > 0.5).collect();
        let objective = selected.iter().map(|&j| pool[j].cost).sum();
        return Ok(IpSolution {
            selected,
            objective,
            lower_bound: root.objective,
            optimal: true,
            nodes: 0,
        });
    }

    let cols = undominated(pool);
    let mut keep = vec![false; pool.len()];
    for &j in &cols {
        keep[j] = true;
    }
    let base_cost = pool.iter().zip(&keep).map(|(c, &k)| if k { c.cost } else { BIG }).collect();
    let start = Rc::new(lp.snapshot());
    let mut problem = Problem {
        m,
        pool,
        granularity: cost_granularity(cols.iter().map(|&j| pool[j].cost)),
        cols,
        base_cost,
        lp,
        deadline: Instant::now() + time_limit,
        incumbent: None,
        nodes: 0,
    };
    problem.incumbent = problem.greedy();

    let mut stack = vec![Node {
        fixed_one: vec![],
        fixed_zero: vec![],
        bound: root.objective,
        start,
    }];
    let mut timed_out = false;
    while let Some(node) = stack.pop() {
        if problem.prunable(node.bound) {
            continue;
        }
        if Instant::now() >= problem.deadline {
            stack.push(node);
            timed_out = true;
            break;
        }
        problem.nodes += 1;
        match problem.evaluate(&node)? {
            Outcome::Infeasible => {}
            Outcome::Integral(obj, chosen) => {
                if problem.incumbent.as_ref().is_none_or(|(best, _)| obj < best - 1e-9) {
                    problem.incumbent = Some((obj, chosen));
                }
            }
            Outcome::Fractional(bound, j) => {
                if problem.prunable(bound) {
                    continue;
                }
                let start = Rc::new(problem.lp.snapshot());
                let mut zero = node.fixed_zero.clone();
                zero.push(j);
                stack.push(Node {
                    fixed_one: node.fixed_one.clone(),
                    fixed_zero: zero,
                    bound,
                    start: start.clone(),
                });
                let mut one = node.fixed_one;
                one.push(j);
                stack.push(Node {
                    fixed_one: one,
                    fixed_zero: node.fixed_zero,
                    bound,
                    start,
                });
            }
        }
    }

    let Some((objective, mut selected)) = problem.incumbent else {
        return Err(MasterError::PoolInfeasible);
    };
    selected.sort_unstable();
    let lower_bound = if timed_out {
        stack
            .iter()
            .map(|n| n.bound)
            .fold(objective, f64::min)
            .max(root.objective)
    } else {
        objective
    };
    Ok(IpSolution {
        selected,
        objective,
        lower_bound,
        optimal: !timed_out,
        nodes: problem.nodes,
    })
}

/// Real columns not dominated by a cheaper (or equal, earlier) superset column.
fn undominated(pool: &[Column]) -> Vec<usize> {
    let real: Vec<(usize, &Column)> = pool.iter().enumerate().filter(|(_, c)| !c.artificial).collect();
    let covers = |a: &Column, b: &Column| b.rows.iter().all(|r| a.rows.binary_search(r).is_ok());
    real.iter()
        .filter(|(j, c)| {
            !real.iter().any(|(k, d)| {
                k != j
                    && d.rows.len() >= c.rows.len()
                    && (d.cost < c.cost || (d.cost == c.cost && (d.rows.len() > c.rows.len() || k < j)))
                    && covers(d, c)
            })
        })
        .map(|(j, _)| *j)
        .collect()
}

impl Problem<'_> {
    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            None => false,
            Some((best, _)) if self.granularity > 0.0 => bound > best - self.granularity + 1e-6,
            Some((best, _)) => bound >= best - 1e-9,
        }
    }

    fn greedy(&self) -> Option<(f64, Vec<usize>)> {
        let mut covered = vec![false; self.m];
        let mut left = self.m;
        let mut chosen: Vec<usize> = Vec::new();
        while left > 0 {
            let best = self
                .cols
                .iter()
                .enumerate()
                .filter_map(|(k, &j)| {
                    let c = &self.pool[j];
                    let fresh = c.rows.iter().filter(|&&r| !covered[r]).count();
                    (fresh > 0).then(|| (c.cost / fresh as f64, k))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))?;
            let col = &self.pool[self.cols[best.1]];
            for &r in &col.rows {
                if !covered[r] {
                    covered[r] = true;
                    left -= 1;
                }
            }
            chosen.push(best.1);
        }
        // drop redundant columns, most expensive first
        let mut count = vec![0usize; self.m];
        for &k in &chosen {
            for &r in &self.pool[self.cols[k]].rows {
                count[r] += 1;
            }
        }
        chosen.sort_by(|&a, &b| self.pool[self.cols[b]].cost.total_cmp(&self.pool[self.cols[a]].cost).then(a.cmp(&b)));
        let mut kept = Vec::new();
        for k in chosen {
            let rows = &self.pool[self.cols[k]].rows;
            if rows.iter().all(|&r| count[r] > 1) {
                for &r in rows {
                    count[r] -= 1;
                }
            } else {
                kept.push(k);
            }
        }
        let objective = kept.iter().map(|&k| self.pool[self.cols[k]].cost).sum();
        Some((objective, kept.into_iter().map(|k| self.cols[k]).collect()))
    }

    fn evaluate(&mut self, node: &Node) -> Result<Outcome, MasterError> {
        let mut covered = vec![false; self.m];
        let mut fixed_cost = 0.0;
        for &j in &node.fixed_one {
            fixed_cost += self.pool[j].cost;
            for &r in &self.pool[j].rows {
                covered[r] = true;
            }
        }
        for (j, &c) in self.base_cost.iter().enumerate() {
            self.lp.set_cost(j, c);
        }
        for &j in &node.fixed_zero {
            self.lp.set_cost(j, BIG);
        }
        for (r, &c) in covered.iter().enumerate() {
            self.lp.set_rhs(r, if c { 0.0 } else { 1.0 });
        }
        self.lp.restore(&node.start);
        let sol = self.lp.solve()?;

        // artificial, dominated and fixed-out columns all cost BIG
        if sol.x.iter().enumerate().any(|(j, &x)| x > ART_TOL && self.lp.column(j).cost >= BIG) {
            return Ok(Outcome::Infeasible);
        }
        let bound = fixed_cost + sol.objective;
        let mut branch: Option<(f64, usize)> = None;
        for &j in &self.cols {
            let x = sol.x[j];
            let frac = (x - x.round()).abs();
            if frac > INT_TOL && branch.is_none_or(|(best, _)| frac > best + 1e-12) {
                branch = Some((frac, j));
            }
        }
        Ok(match branch {
            Some((_, j)) => Outcome::Fractional(bound, j),
            None => {
                let mut chosen = node.fixed_one.clone();
                chosen.extend(
                    self.cols
                        .iter()
                        .filter(|&&j| sol.x[j] > 0.5 && !covered_only(&self.pool[j].rows, &covered))
                        .copied(),
                );
                let objective = chosen.iter().map(|&j| self.pool[j].cost).sum();
                Outcome::Integral(objective, chosen)
            }
        })
    }
}

/// True when every row of a column is already covered by a fixed column.
fn covered_only(rows: &[usize], covered: &[bool]) -> bool {
    rows.iter().all(|&r| covered[r])
}
