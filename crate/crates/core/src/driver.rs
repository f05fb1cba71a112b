//! Column-generation loop in three modes.
//!
//! * Baseline prices on the full graph until no improving duty is left.
//! * Optimal prices on the reduced graph until it is exhausted, then switches
//!   to the full graph, so the final LP objective matches Baseline.
//! * Fast prices on the reduced graph only and goes straight to the IP.
//!
//! The IP is always solved over the accumulated pool; no columns are added
//! after column generation stops.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{GnnError, Model};
use crate::graph::{EdgeKind, TimeSpaceGraph};
use crate::master::{init_pool, Column, IpSolution, MasterError, RmpState};
use crate::pricer::{price, DEFAULT_MAX_COLS};
use crate::reduce::{build_reduced_graph, predict_valid_edges, ReducedGraph, ReductionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Baseline,
    Optimal,
    Fast,
}

impl SolveMode {
    pub const ALL: [SolveMode; 3] = [SolveMode::Baseline, SolveMode::Optimal, SolveMode::Fast];

    pub fn name(self) -> &'static str {
        match self {
            SolveMode::Baseline => "baseline",
            SolveMode::Optimal => "optimal",
            SolveMode::Fast => "fast",
        }
    }

    pub fn needs_model(self) -> bool {
        self != SolveMode::Baseline
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolveMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?}; expected baseline, optimal or fast"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_cols: usize,
    pub max_iterations: usize,
    pub ip_time_limit: Duration,
    pub reduction: ReductionConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_cols: DEFAULT_MAX_COLS,
            max_iterations: 10_000,
            ip_time_limit: Duration::from_secs(10),
            reduction: ReductionConfig::default(),
        }
    }
}

/// Wall-clock seconds per phase. `total_s` covers everything from model
/// inference to the end of the IP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub total_s: f64,
    pub predict_s: f64,
    pub pricing_s: f64,
    pub lp_s: f64,
    pub ip_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: SolveMode,
    pub lp_objective: f64,
    pub ip_objective: f64,
    pub ip_optimal: bool,
    pub ip_gap: f64,
    /// Pricing rounds that returned at least one column.
    pub iterations: usize,
    pub columns_generated: usize,
    pub times: PhaseTimes,
    /// `(elapsed seconds, RMP objective)` after every LP solve.
    pub trajectory: Vec<(f64, f64)>,
    /// Iteration count at which Optimal mode moved to the full graph.
    pub switched_at: Option<usize>,
    /// Connection edges kept by the reduction, when one was used.
    pub reduced_connections: Option<usize>,
}

impl SolveReport {
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("elapsed_s,objective\n");
        for (t, obj) in &self.trajectory {
            out.push_str(&format!("{t:.6},{obj:.9}\n"));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("mode {0} needs a model")]
    MissingModel(SolveMode),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error("no integer cover without artificial columns")]
    IpWithArtificials,
    #[error("iteration cap of {0} reached")]
    IterationLimit(usize),
}

/// Report plus the final pool and integer solution.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub report: SolveReport,
    pub rmp: RmpState,
    pub ip: IpSolution,
}

impl SolveOutcome {
    pub fn selected_columns(&self) -> impl Iterator<Item = &Column> {
        self.ip.selected.iter().map(|&j| &self.rmp.columns()[j])
    }
}

pub fn solve(g: &TimeSpaceGraph, mode: SolveMode, model: Option<&Model>, cfg: &SolveConfig) -> Result<SolveOutcome, DriverError> {
    let start = Instant::now();
    let reduced = if mode.needs_model() {
        let model = model.ok_or(DriverError::MissingModel(mode))?;
        let scores = predict_valid_edges(model, g)?;
        Some(build_reduced_graph(g, &scores, &cfg.reduction))
    } else {
        None
    };
    let predict_s = start.elapsed().as_secs_f64();
    run(g, mode, reduced.as_ref(), cfg, start, predict_s)
}

/// Like [`solve`] with a reduced graph built by the caller; Baseline ignores it.
pub fn solve_with_reduced(g: &TimeSpaceGraph, mode: SolveMode, reduced: &ReducedGraph, cfg: &SolveConfig) -> Result<SolveOutcome, DriverError> {
    run(g, mode, Some(reduced), cfg, Instant::now(), 0.0)
}

fn run(
    g: &TimeSpaceGraph,
    mode: SolveMode,
    reduced: Option<&ReducedGraph>,
    cfg: &SolveConfig,
    start: Instant,
    predict_s: f64,
) -> Result<SolveOutcome, DriverError> {
    let mut times = PhaseTimes { predict_s, ..Default::default() };
    let mut rmp = init_pool(g);
    let mut trajectory = Vec::new();
    let mut iterations = 0;
    let mut columns_generated = 0;
    let mut switched_at = None;

    let phases: Vec<Option<&ReducedGraph>> = match (mode, reduced) {
        (SolveMode::Baseline, _) => vec![None],
        (_, None) => return Err(DriverError::MissingModel(mode)),
        (SolveMode::Optimal, Some(r)) => vec![Some(r), None],
        (SolveMode::Fast, Some(r)) => vec![Some(r)],
    };
    let mut lp_objective = f64::NAN;
    for (k, phase) in phases.iter().enumerate() {
        if k > 0 {
            switched_at = Some(iterations);
        }
        let graph = phase.map_or(g, |r| &r.graph);
        loop {
            let t = Instant::now();
            let sol = rmp.lp_solve()?;
            lp_objective = sol.objective;
            let duals = sol.duals.clone();
            times.lp_s += t.elapsed().as_secs_f64();
            trajectory.push((start.elapsed().as_secs_f64(), lp_objective));

            let t = Instant::now();
            let priced = price(graph, &duals, cfg.max_cols);
            times.pricing_s += t.elapsed().as_secs_f64();
            if priced.is_empty() {
                break;
            }
            if iterations >= cfg.max_iterations {
                return Err(DriverError::IterationLimit(cfg.max_iterations));
            }
            let cols = priced
                .into_iter()
                .map(|pc| match phase {
                    Some(r) => Column::from_path(g, r.to_full_path(&pc.column.edge_path)),
                    None => Ok(pc.column),
                })
                .collect::<Result<Vec<_>, _>>()?;
            columns_generated += rmp.add_columns(cols)?;
            iterations += 1;
        }
    }

    let t = Instant::now();
    let ip = match rmp.ip_finish(cfg.ip_time_limit) {
        Err(MasterError::PoolInfeasible) => return Err(DriverError::IpWithArtificials),
        other => other?,
    };
    times.ip_s = t.elapsed().as_secs_f64();
    if ip.selected.iter().any(|&j| rmp.columns()[j].artificial) {
        return Err(DriverError::IpWithArtificials);
    }
    times.total_s = start.elapsed().as_secs_f64();

    let report = SolveReport {
        mode,
        lp_objective,
        ip_objective: ip.objective,
        ip_optimal: ip.optimal,
        ip_gap: ip.gap(),
        iterations,
        columns_generated,
        times,
        trajectory,
        switched_at,
        reduced_connections: reduced.filter(|_| mode.needs_model()).map(|r| r.connection_count()),
    };
    Ok(SolveOutcome { report, rmp, ip })
}

/// Label 1 for every Connection edge used by a selected column, in the order
/// of [`TimeSpaceGraph::connection_edges`].
pub fn extract_valid_edges<'a>(g: &TimeSpaceGraph, selected: impl IntoIterator<Item = &'a Column>) -> Vec<u8> {
    let mut used = vec![false; g.edges().len()];
    for col in selected {
        for &e in &col.edge_path {
            used[e] = true;
        }
    }
    g.edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::Connection)
        .map(|e| used[e.id] as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{generate, GenConfig};
    use crate::reduce::ReductionConfig;
    use crate::gnn::EdgeScores;

    fn uniform_reduction(g: &TimeSpaceGraph, threshold: f64) -> ReducedGraph {
        let edge_ids = g.connection_edges();
        let p = (0..edge_ids.len()).map(|k| ((k * 37) % 100) as f64 / 100.0).collect();
        build_reduced_graph(g, &EdgeScores { edge_ids, p }, &ReductionConfig { threshold, connectivity_guard: true })
    }

    #[test]
    fn mode_names_round_trip() {
        for m in SolveMode::ALL {
            assert_eq!(m.name().parse::<SolveMode>().unwrap(), m);
        }
        assert!("exact".parse::<SolveMode>().is_err());
    }

    #[test]
    fn baseline_report_is_consistent() {
        let g = generate(&GenConfig::with_seed(12)).unwrap();
        let out = solve(&g, SolveMode::Baseline, None, &SolveConfig::default()).unwrap();
        let r = &out.report;
        assert!(r.ip_objective >= r.lp_objective - 1e-6);
        assert!(r.trajectory.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9));
        assert_eq!(r.switched_at, None);
        assert!(r.times.pricing_s + r.times.lp_s + r.times.ip_s <= r.times.total_s + 1e-9);
        let cover: usize = out.selected_columns().map(|c| c.rows.len()).sum();
        assert!(cover >= g.num_rows());
    }

    #[test]
    fn optimal_matches_baseline_lp() {
        let g = generate(&GenConfig::with_seed(13)).unwrap();
        let cfg = SolveConfig::default();
        let base = solve(&g, SolveMode::Baseline, None, &cfg).unwrap();
        let red = uniform_reduction(&g, 0.5);
        let opt = solve_with_reduced(&g, SolveMode::Optimal, &red, &cfg).unwrap();
        assert!((opt.report.lp_objective - base.report.lp_objective).abs() <= 1e-6);
        assert!(opt.report.switched_at.is_some());
        let fast = solve_with_reduced(&g, SolveMode::Fast, &red, &cfg).unwrap();
        assert!(fast.report.lp_objective >= base.report.lp_objective - 1e-6);
        // a reduction that keeps everything gives the baseline column universe
        let all = uniform_reduction(&g, -1.0);
        let fast_all = solve_with_reduced(&g, SolveMode::Fast, &all, &cfg).unwrap();
        assert!((fast_all.report.lp_objective - base.report.lp_objective).abs() <= 1e-6);
    }

    #[test]
    fn missing_model_is_an_error() {
        let g = generate(&GenConfig::with_seed(1)).unwrap();
        assert!(matches!(solve(&g, SolveMode::Fast, None, &SolveConfig::default()), Err(DriverError::MissingModel(_))));
    }

    #[test]
    fn valid_edges_from_selection() {
        let g = generate(&GenConfig::with_seed(14)).unwrap();
        let conns = g.connection_edges();
        assert!(extract_valid_edges(&g, []).iter().all(|&l| l == 0));
        // a duty through one connection edge
        let e = g.edge(conns[3]);
        let sign_in = g.in_edges(e.tail).iter().copied().find(|&k| g.edge(k).kind == EdgeKind::SignIn);
        let off = g.out_edges(e.head).iter().copied().find(|&k| g.edge(k).kind != EdgeKind::Connection);
        if let (Some(a), Some(b)) = (sign_in, off) {
            if let Ok(col) = Column::from_path(&g, vec![a, e.id, b]) {
                let labels = extract_valid_edges(&g, [&col]);
                assert_eq!(labels.len(), conns.len());
                assert_eq!(labels.iter().map(|&l| l as usize).sum::<usize>(), 1);
                assert_eq!(labels[3], 1);
            }
        }
        let out = solve(&g, SolveMode::Baseline, None, &SolveConfig::default()).unwrap();
        let labels = extract_valid_edges(&g, out.selected_columns());
        let positives = labels.iter().filter(|&&l| l == 1).count();
        assert!(positives > 0 && positives * 2 < labels.len());
    }
}
