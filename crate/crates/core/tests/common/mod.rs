//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::time::Duration;

use cgp_core::driver::{solve, SolveConfig, SolveMode, SolveOutcome};
use cgp_core::gnn::loss::{weighted_bce, weighted_bce_logit_grad};
use cgp_core::gnn::net::{backward, forward, GraphIndex, Mode};
use cgp_core::gnn::params::{Hyper, ModelParams};
use cgp_core::gnn::Model;
use cgp_core::graph::{NodeKind, TimeSpaceGraph, MAX_WORK};
use cgp_core::instgen::{generate, GenConfig};
use cgp_core::master::{reduced_cost, Column, LpSolution, RmpState};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeds of instances never used for training.
pub const TEST_SEED_BASE: u64 = 100_000;

/// First `k` trips of a generated instance with every edge among them.
pub fn truncated(seed: u64, k: usize) -> TimeSpaceGraph {
    let full = generate(&GenConfig::with_seed(seed)).unwrap();
    let keep: Vec<bool> = full
        .nodes()
        .iter()
        .map(|n| n.kind != NodeKind::Service || full.row_of(n.id).unwrap() < k)
        .collect();
    full.induced_subgraph(&keep)
}

/// Reduced cost of a duty given as an edge path: fixed edge costs minus the
/// duals of the trips it covers, computed straight from the graph.
pub fn path_reduced_cost(g: &TimeSpaceGraph, path: &[usize], duals: &[f64]) -> f64 {
    path.iter()
        .map(|&e| {
            let edge = g.edge(e);
            edge.fixed_cost - g.row_of(edge.head).map_or(0.0, |r| duals[r])
        })
        .sum()
}

/// Minimum reduced cost over every feasible duty by depth-first enumeration.
pub fn brute_force_min_rcost(g: &TimeSpaceGraph, duals: &[f64]) -> Option<f64> {
    fn dfs(g: &TimeSpaceGraph, duals: &[f64], v: usize, cost: f64, time: u32, best: &mut Option<f64>) {
        for &e in g.out_edges(v) {
            let edge = g.edge(e);
            let t = time + edge.time_use;
            if t > MAX_WORK {
                continue;
            }
            let c = cost + edge.fixed_cost - g.row_of(edge.head).map_or(0.0, |r| duals[r]);
            if g.node(edge.head).kind.is_terminal() {
                if best.is_none_or(|b| c < b) {
                    *best = Some(c);
                }
            } else {
                dfs(g, duals, edge.head, c, t, best);
            }
        }
    }
    let mut best = None;
    for n in g.nodes().iter().filter(|n| n.kind == NodeKind::Source) {
        dfs(g, duals, n.id, 0.0, 0, &mut best);
    }
    best
}

/// A uniformly random walk from a random Source that respects the working
/// time cap, or `None` when the walk gets stuck.
pub fn random_duty(g: &TimeSpaceGraph, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let sources: Vec<usize> = g.nodes().iter().filter(|n| n.kind == NodeKind::Source).map(|n| n.id).collect();
    let mut v = sources[rng.gen_range(0..sources.len())];
    let mut time = 0;
    let mut path = Vec::new();
    loop {
        let options: Vec<usize> = g
            .out_edges(v)
            .iter()
            .copied()
            .filter(|&e| time + g.edge(e).time_use <= MAX_WORK)
            .collect();
        if options.is_empty() {
            return None;
        }
        let e = options[rng.gen_range(0..options.len())];
        time += g.edge(e).time_use;
        path.push(e);
        v = g.edge(e).head;
        if g.node(v).kind.is_terminal() {
            return Some(path);
        }
    }
}

/// `count` feasible duties sampled by random walks.
pub fn random_duties(g: &TimeSpaceGraph, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if let Some(p) = random_duty(g, &mut rng) {
            out.push(p);
        }
    }
    out
}

/// Exhaustive minimum over all subsets of real columns covering every row.
pub fn enumerate_ip(m: usize, cols: &[Column]) -> Option<f64> {
    let real: Vec<&Column> = cols.iter().filter(|c| !c.artificial).collect();
    assert!(real.len() <= 20, "enumeration is exponential");
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << real.len()) {
        let mut covered = vec![false; m];
        let mut cost = 0.0;
        for (j, c) in real.iter().enumerate() {
            if mask & (1 << j) != 0 {
                cost += c.cost;
                for &r in &c.rows {
                    covered[r] = true;
                }
            }
        }
        if covered.iter().all(|&c| c) && best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
    }
    best
}

/// Largest violation of the LP optimality conditions of `sol` over the pool:
/// primal and dual feasibility, complementary slackness and strong duality.
pub fn certificate_violation(state: &RmpState, sol: &LpSolution) -> f64 {
    let m = state.rows();
    let mut worst: f64 = 0.0;
    for &u in &sol.duals {
        worst = worst.max(-u);
    }
    let mut lhs = vec![0.0; m];
    for (col, &x) in state.columns().iter().zip(&sol.x) {
        worst = worst.max(-x);
        let rc = reduced_cost(col, &sol.duals);
        worst = worst.max(-rc).max((x * rc).abs());
        for &r in &col.rows {
            lhs[r] += x;
        }
    }
    for (r, &a) in lhs.iter().enumerate() {
        worst = worst.max(1.0 - a).max((sol.duals[r] * (a - 1.0)).abs());
    }
    let primal: f64 = state.columns().iter().zip(&sol.x).map(|(c, x)| c.cost * x).sum();
    worst.max((primal - sol.objective).abs()).max((sol.duals.iter().sum::<f64>() - sol.objective).abs())
}

/// A random covering pool with `m` rows and `n` real columns.
pub fn random_pool(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<Column> {
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=m.min(4));
            let mut rows: Vec<usize> = (0..k).map(|_| rng.gen_range(0..m)).collect();
            rows.sort_unstable();
            rows.dedup();
            let cost = [1.0, 1.5, 2.0, 2.5, 3.0][rng.gen_range(0..5)];
            Column::from_rows(rows, cost)
        })
        .collect()
}

/// Median of `reps` solves of `g` in `mode`; returns the last outcome too.
pub fn timed_solve(g: &TimeSpaceGraph, mode: SolveMode, model: Option<&Model>, cfg: &SolveConfig, reps: usize) -> (f64, SolveOutcome) {
    let mut times = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps {
        let out = solve(g, mode, model, cfg).unwrap();
        times.push(out.report.times.total_s);
        last = Some(out);
    }
    times.sort_by(f64::total_cmp);
    (times[reps / 2], last.unwrap())
}

pub fn ip_limit() -> Duration {
    SolveConfig::default().ip_time_limit
}

/// Random directed graph on `nodes` nodes with `edges` forward edges, every
/// other edge scored, plus random features and labels.
pub fn random_gnn_problem(seed: u64, nodes: usize, edges: usize, node_dim: usize, edge_dim: usize) -> (GraphIndex, Array2<f64>, Array2<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tail = Vec::new();
    let mut head = Vec::new();
    while tail.len() < edges {
        let a = rng.gen_range(0..nodes);
        let b = rng.gen_range(0..nodes);
        if a < b {
            tail.push(a);
            head.push(b);
        }
    }
    let scored: Vec<usize> = (0..edges).filter(|k| k % 2 == 0).collect();
    let labels = scored.iter().map(|_| rng.gen_range(0..2u8)).collect();
    let x = Array2::from_shape_fn((nodes, node_dim), |_| rng.gen_range(0.0..1.0));
    let e = Array2::from_shape_fn((edges, edge_dim), |_| rng.gen_range(0.0..1.0));
    (GraphIndex { num_nodes: nodes, tail, head, scored }, x, e, labels)
}

/// Randomly initialized parameters with perturbed batch-norm affine terms.
pub fn random_params(hyper: Hyper, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(hyper, &mut rng);
    for t in p.learnable_mut() {
        if t.nrows() == 1 {
            t.mapv_inplace(|v| v + rng.gen_range(-0.3..0.3));
        }
    }
    p
}

/// Largest entrywise relative error between the analytic gradient of the
/// weighted loss and central differences with step `eps`. Entries where both
/// gradients are below `floor` in magnitude are compared against `floor`.
pub fn max_gradient_error(params: &ModelParams, index: &GraphIndex, x: &Array2<f64>, e: &Array2<f64>, labels: &[u8], eps: f64, floor: f64) -> f64 {
    let w_neg = 0.15;
    let loss = |p: &ModelParams| weighted_bce(&forward(p, x, e, index, Mode::Train).unwrap().probs, labels, w_neg);
    let out = forward(params, x, e, index, Mode::Train).unwrap();
    let dl = weighted_bce_logit_grad(&out.probs, labels, w_neg);
    let grads = backward(params, &out.cache, index, &dl);
    let mut worst: f64 = 0.0;
    for (t, analytic) in grads.learnable().iter().enumerate() {
        for idx in 0..analytic.len() {
            let (r, c) = (idx / analytic.ncols(), idx % analytic.ncols());
            let mut plus = params.clone();
            plus.learnable_mut()[t][[r, c]] += eps;
            let mut minus = params.clone();
            minus.learnable_mut()[t][[r, c]] -= eps;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let a = analytic[[r, c]];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}
