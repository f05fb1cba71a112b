//! Pricing sub-problem: resource-constrained shortest paths on the duty DAG.
//!
//! Labels carry the reduced cost and the working time accumulated since
//! sign-in. Nodes are settled in topological order, so each label is
//! extended exactly once. Row duals are charged on the edge entering the
//! Service node of that row, so a complete duty's label cost equals the
//! master problem's reduced cost of the corresponding column.

use std::cmp::Ordering;

use crate::graph::{NodeKind, TimeSpaceGraph, MAX_WORK};
use crate::master::{Column, RC_TOL};

/// Default number of columns returned per pricing round.
pub const DEFAULT_MAX_COLS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label {
    pub node: usize,
    pub rcost: f64,
    pub time_used: u32,
    /// Arena index of the predecessor label and the edge used to reach this one.
    pub pred: Option<(usize, usize)>,
}

/// True iff `a` is no worse than `b` in both cost and time and strictly
/// better in at least one of them.
pub fn dominance(a: &Label, b: &Label) -> bool {
    debug_assert_eq!(a.node, b.node);
    a.rcost <= b.rcost && a.time_used <= b.time_used && (a.rcost < b.rcost || a.time_used < b.time_used)
}

/// Per-edge reduced weight: fixed cost minus the dual of the entered trip.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights(pub Vec<f64>);

impl EdgeWeights {
    pub fn new(g: &TimeSpaceGraph, duals: &[f64]) -> Self {
        assert_eq!(duals.len(), g.num_rows(), "one dual per trip");
        EdgeWeights(
            g.edges()
                .iter()
                .map(|e| match g.row_of(e.head) {
                    Some(row) => e.fixed_cost - duals[row],
                    None => e.fixed_cost,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricedColumn {
    pub column: Column,
    /// Reduced cost accumulated by the label.
    pub rcost: f64,
    pub time_used: u32,
}

/// Inserts `label` into a Pareto frontier unless some member is at least as
/// good in both criteria; evicts members the new label dominates.
fn insert_label(frontier: &mut Vec<usize>, arena: &mut Vec<Label>, label: Label) {
    for &i in frontier.iter() {
        let l = &arena[i];
        if l.rcost <= label.rcost && l.time_used <= label.time_used {
            return;
        }
    }
    frontier.retain(|&i| !dominance(&label, &arena[i]));
    frontier.push(arena.len());
    arena.push(label);
}

fn path_of(arena: &[Label], mut idx: usize) -> Vec<usize> {
    let mut path = Vec::new();
    while let Some((pred, edge)) = arena[idx].pred {
        path.push(edge);
        idx = pred;
    }
    path.reverse();
    path
}

/// Runs label setting over `g` and returns at most `max_cols` duties with
/// reduced cost below `-1e-6`, cheapest first. An empty result proves that no
/// improving duty exists on `g`.
pub fn price(g: &TimeSpaceGraph, duals: &[f64], max_cols: usize) -> Vec<PricedColumn> {
    let weights = EdgeWeights::new(g, duals);
    let mut arena: Vec<Label> = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new(); g.nodes().len()];
    let mut finished: Vec<usize> = Vec::new();

    for node in g.nodes().iter().filter(|n| n.kind == NodeKind::Source) {
        frontier[node.id].push(arena.len());
        arena.push(Label {
            node: node.id,
            rcost: 0.0,
            time_used: 0,
            pred: None,
        });
    }

    for &v in g.topo_order() {
        if g.node(v).kind.is_terminal() {
            continue;
        }
        let labels = std::mem::take(&mut frontier[v]);
        for &li in &labels {
            let label = arena[li];
            for &e in g.out_edges(v) {
                let edge = g.edge(e);
                let time_used = label.time_used + edge.time_use;
                if time_used > MAX_WORK {
                    continue;
                }
                let next = Label {
                    node: edge.head,
                    rcost: label.rcost + weights.0[e],
                    time_used,
                    pred: Some((li, e)),
                };
                if g.node(edge.head).kind.is_terminal() {
                    if next.rcost < -RC_TOL {
                        finished.push(arena.len());
                        arena.push(next);
                    }
                } else {
                    insert_label(&mut frontier[edge.head], &mut arena, next);
                }
            }
        }
        frontier[v] = labels;
    }

    finished.sort_by(|&a, &b| {
        let (la, lb) = (&arena[a], &arena[b]);
        la.rcost
            .partial_cmp(&lb.rcost)
            .unwrap_or(Ordering::Equal)
            .then(la.time_used.cmp(&lb.time_used))
            .then(la.node.cmp(&lb.node))
            .then(a.cmp(&b))
    });
    finished
        .into_iter()
        .take(max_cols)
        .map(|i| {
            let path = path_of(&arena, i);
            let column = Column::from_path(g, path).expect("label paths are legal duties");
            PricedColumn {
                column,
                rcost: arena[i].rcost,
                time_used: arena[i].time_used,
            }
        })
        .collect()
}
