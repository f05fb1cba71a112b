//! Raw node/edge features and their min-max normalization.
//!
//! Node features: one-hot node kind (4), one-hot departure station (S),
//! one-hot arrival station (S), `t_dep/1440`, `t_arr/1440`, `duration/480`.
//! Edge features: one-hot edge kind (4), `time_use/480`, `transit_gap/480`.
//! Non-service nodes use 0 for all time fields; the deadhead node has no
//! station bits set. The transit gap is 0 for non-connection edges.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::graph::{EdgeKind, NodeKind, TimeSpaceGraph, MAX_WORK};

const DAY: f64 = 1440.0;

pub fn node_dim(stations: usize) -> usize {
    4 + 2 * stations + 3
}

pub const EDGE_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub x_init: Array2<f64>,
    pub e_init: Array2<f64>,
}

pub fn featurize(g: &TimeSpaceGraph) -> Features {
    let s = g.stations();
    let mut x = Array2::zeros((g.nodes().len(), node_dim(s)));
    for node in g.nodes() {
        let mut row = x.row_mut(node.id);
        row[node.kind.index()] = 1.0;
        if let Some(d) = node.station_dep {
            row[4 + d] = 1.0;
        }
        if let Some(a) = node.station_arr {
            row[4 + s + a] = 1.0;
        }
        if node.kind == NodeKind::Service {
            row[4 + 2 * s] = node.t_dep as f64 / DAY;
            row[4 + 2 * s + 1] = node.t_arr as f64 / DAY;
            row[4 + 2 * s + 2] = node.duration() as f64 / MAX_WORK as f64;
        }
    }
    let mut e = Array2::zeros((g.edges().len(), EDGE_DIM));
    for edge in g.edges() {
        let mut row = e.row_mut(edge.id);
        row[edge.kind.index()] = 1.0;
        row[4] = edge.time_use as f64 / MAX_WORK as f64;
        if edge.kind == EdgeKind::Connection {
            let gap = g.node(edge.head).t_dep - g.node(edge.tail).t_arr;
            row[5] = gap as f64 / MAX_WORK as f64;
        }
    }
    Features { x_init: x, e_init: e }
}

/// Per-dimension minimum and maximum over a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub node_min: Vec<f64>,
    pub node_max: Vec<f64>,
    pub edge_min: Vec<f64>,
    pub edge_max: Vec<f64>,
}

fn column_range(m: &Array2<f64>, lo: &mut [f64], hi: &mut [f64]) {
    for row in m.rows() {
        for (k, &v) in row.iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
}

/// Maps each column to `[0, 1]`; constant columns map to 0 and values outside
/// the fitted range are clamped.
fn normalize(m: &Array2<f64>, lo: &[f64], hi: &[f64]) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            let span = hi[k] - lo[k];
            *v = if span > 0.0 {
                ((*v - lo[k]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    out
}

impl NormStats {
    /// Returns `None` for an empty iterator.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a Features>) -> Option<Self> {
        let mut stats: Option<NormStats> = None;
        for f in features {
            let s = stats.get_or_insert_with(|| NormStats {
                node_min: vec![f64::INFINITY; f.x_init.ncols()],
                node_max: vec![f64::NEG_INFINITY; f.x_init.ncols()],
                edge_min: vec![f64::INFINITY; f.e_init.ncols()],
                edge_max: vec![f64::NEG_INFINITY; f.e_init.ncols()],
            });
            column_range(&f.x_init, &mut s.node_min, &mut s.node_max);
            column_range(&f.e_init, &mut s.edge_min, &mut s.edge_max);
        }
        // dimensions never observed (empty graphs) behave as constants
        if let Some(s) = &mut stats {
            for (lo, hi) in s.node_min.iter_mut().zip(s.node_max.iter_mut()).chain(s.edge_min.iter_mut().zip(s.edge_max.iter_mut())) {
                if !lo.is_finite() || !hi.is_finite() {
                    *lo = 0.0;
                    *hi = 0.0;
                }
            }
        }
        stats
    }

    pub fn apply(&self, f: &Features) -> Features {
        Features {
            x_init: normalize(&f.x_init, &self.node_min, &self.node_max),
            e_init: normalize(&f.e_init, &self.edge_min, &self.edge_max),
        }
    }
}
