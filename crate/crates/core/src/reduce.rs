//! Graph reduction from predicted edge probabilities.
//!
//! Only Connection edges are scored. Sign-in, sign-off and deadhead edges
//! encode duty legality and are always kept.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::gnn::{EdgeScores, GnnError, Model};
use crate::graph::{EdgeKind, NodeKind, TimeSpaceGraph, MAX_WORK};

pub const DEFAULT_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    /// Connection edges with score strictly above this are kept.
    pub threshold: f64,
    /// Keep enough extra connections that every trip stays coverable.
    pub connectivity_guard: bool,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            threshold: DEFAULT_THRESHOLD,
            connectivity_guard: true,
        }
    }
}

/// A reduced graph plus the id of every kept edge in the full graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedGraph {
    pub graph: TimeSpaceGraph,
    pub edge_map: Vec<usize>,
}

impl ReducedGraph {
    pub fn to_full_path(&self, path: &[usize]) -> Vec<usize> {
        path.iter().map(|&e| self.edge_map[e]).collect()
    }

    pub fn connection_count(&self) -> usize {
        self.graph
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::Connection)
            .count()
    }
}

/// Scores every Connection edge of `g` with the model in eval mode.
pub fn predict_valid_edges(model: &Model, g: &TimeSpaceGraph) -> Result<EdgeScores, GnnError> {
    model.predict(g)
}

/// Latest possible first-trip departure of a duty reaching each node using
/// only edges with `keep[e]`, and the incoming edge achieving it.
fn latest_starts(g: &TimeSpaceGraph, keep: &[bool]) -> Vec<Option<(u32, Option<usize>)>> {
    let mut ls: Vec<Option<(u32, Option<usize>)>> = vec![None; g.nodes().len()];
    for &v in g.topo_order() {
        if g.node(v).kind != NodeKind::Service {
            continue;
        }
        let node = g.node(v);
        let mut best: Option<(u32, Option<usize>)> = None;
        for &e in g.in_edges(v) {
            if !keep[e] {
                continue;
            }
            let edge = g.edge(e);
            let start = match edge.kind {
                EdgeKind::SignIn => Some(node.t_dep),
                EdgeKind::Connection => ls[edge.tail].map(|(s, _)| s),
                _ => None,
            };
            if let Some(s) = start {
                if node.t_arr - s <= MAX_WORK && best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, (edge.kind == EdgeKind::Connection).then_some(e)));
                }
            }
        }
        ls[v] = best;
    }
    ls
}

/// Keeps all non-Connection edges and Connection edges scoring above the
/// threshold.
///
/// With the guard on, a trip that no kept duty can reach within the
/// working-time cap gets its best-scored incoming connection from a reachable
/// trip that makes it feasible. If no single edge suffices, the latest-start
/// chain of the full graph is restored. Every trip always keeps its
/// sign-off or deadhead edge, so outgoing reachability never needs repair.
pub fn build_reduced_graph(g: &TimeSpaceGraph, scores: &EdgeScores, cfg: &ReductionConfig) -> ReducedGraph {
    let mut score = vec![f64::NAN; g.edges().len()];
    for (&e, &p) in scores.edge_ids.iter().zip(&scores.p) {
        score[e] = p;
    }
    let mut keep: Vec<bool> = g
        .edges()
        .iter()
        .map(|e| e.kind != EdgeKind::Connection || score[e.id] > cfg.threshold)
        .collect();

    if cfg.connectivity_guard {
        let all = vec![true; g.edges().len()];
        let full_ls = latest_starts(g, &all);
        let mut ls: Vec<Option<u32>> = vec![None; g.nodes().len()];
        for &v in g.topo_order() {
            let node = g.node(v);
            if node.kind != NodeKind::Service {
                continue;
            }
            let reach = |ls: &[Option<u32>], keep: &[bool]| {
                g.in_edges(v)
                    .iter()
                    .filter(|&&e| keep[e])
                    .filter_map(|&e| {
                        let edge = g.edge(e);
                        match edge.kind {
                            EdgeKind::SignIn => Some(node.t_dep),
                            _ => ls[edge.tail],
                        }
                    })
                    .filter(|&s| node.t_arr - s <= MAX_WORK)
                    .max()
            };
            ls[v] = reach(&ls, &keep);
            if ls[v].is_some() || full_ls[v].is_none() {
                continue;
            }
            let candidate = g
                .in_edges(v)
                .iter()
                .copied()
                .filter(|&e| g.edge(e).kind == EdgeKind::Connection)
                .filter(|&e| ls[g.edge(e).tail].is_some_and(|s| node.t_arr - s <= MAX_WORK))
                .max_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a)));
            match candidate {
                Some(e) => keep[e] = true,
                None => {
                    // restore the full graph's latest-start chain into v
                    let mut u = v;
                    while let Some((s, Some(e))) = full_ls[u] {
                        keep[e] = true;
                        ls[u] = Some(ls[u].map_or(s, |x| x.max(s)));
                        u = g.edge(e).tail;
                    }
                    if let Some((s, None)) = full_ls[u] {
                        ls[u] = Some(ls[u].map_or(s, |x| x.max(s)));
                    }
                }
            }
            ls[v] = reach(&ls, &keep);
        }
    }

    let (graph, edge_map) = g.edge_subgraph(|e| keep[e.id]);
    ReducedGraph { graph, edge_map }
}

/// CSV of scores sorted by descending probability:
/// `edge_id,tail,head,score[,label]`.
pub fn scores_csv(g: &TimeSpaceGraph, scores: &EdgeScores, labels: Option<&[u8]>) -> String {
    let mut order: Vec<usize> = (0..scores.p.len()).collect();
    order.sort_by(|&a, &b| scores.p[b].total_cmp(&scores.p[a]).then(a.cmp(&b)));
    let mut out = String::from(if labels.is_some() {
        "edge_id,tail,head,score,label\n"
    } else {
        "edge_id,tail,head,score\n"
    });
    for k in order {
        let e = g.edge(scores.edge_ids[k]);
        write!(out, "{},{},{},{:.6}", e.id, e.tail, e.head, scores.p[k]).unwrap();
        if let Some(l) = labels {
            write!(out, ",{}", l[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate_graph;
    use crate::instgen::{generate, GenConfig};

    fn uniform(g: &TimeSpaceGraph, p: f64) -> EdgeScores {
        let edge_ids = g.connection_edges();
        let p = vec![p; edge_ids.len()];
        EdgeScores { edge_ids, p }
    }

    fn coverable(g: &TimeSpaceGraph) -> bool {
        let ls = latest_starts(g, &vec![true; g.edges().len()]);
        g.nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::Service)
            .all(|n| ls[n.id].is_some())
    }

    #[test]
    fn low_threshold_keeps_everything() {
        let g = generate(&GenConfig::with_seed(5)).unwrap();
        let cfg = ReductionConfig { threshold: 1e-12, connectivity_guard: true };
        let r = build_reduced_graph(&g, &uniform(&g, 0.5), &cfg);
        assert_eq!(r.graph, g);
        assert_eq!(r.edge_map, (0..g.edges().len()).collect::<Vec<_>>());
    }

    #[test]
    fn extreme_threshold_without_guard() {
        let g = generate(&GenConfig::with_seed(5)).unwrap();
        let cfg = ReductionConfig { threshold: 0.999, connectivity_guard: false };
        let r = build_reduced_graph(&g, &uniform(&g, 0.5), &cfg);
        assert_eq!(r.connection_count(), 0);
        assert_eq!(r.graph.edges().len(), g.edges().len() - g.connection_edges().len());
        assert_eq!(r.graph.nodes(), g.nodes());
        assert!(validate_graph(&r.graph).is_empty());
    }

    #[test]
    fn guard_keeps_every_trip_coverable() {
        for seed in 0..5 {
            let g = generate(&GenConfig::with_seed(seed)).unwrap();
            assert!(coverable(&g));
            let cfg = ReductionConfig { threshold: 0.999, connectivity_guard: true };
            let r = build_reduced_graph(&g, &uniform(&g, 0.5), &cfg);
            assert!(coverable(&r.graph), "seed {seed}");
            assert!(r.connection_count() < g.connection_edges().len());
            for (k, e) in r.graph.edges().iter().enumerate() {
                let f = g.edge(r.edge_map[k]);
                assert_eq!((e.kind, e.tail, e.head), (f.kind, f.tail, f.head));
            }
        }
    }

    #[test]
    fn csv_sorted_descending() {
        let g = generate(&GenConfig::with_seed(2)).unwrap();
        let mut s = uniform(&g, 0.0);
        for (k, p) in s.p.iter_mut().enumerate() {
            *p = (k % 7) as f64 / 7.0;
        }
        let csv = scores_csv(&g, &s, None);
        let values: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(values.len(), s.p.len());
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
    }
}
