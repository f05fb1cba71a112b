//! Seeded generator of crew scheduling instances on a single railway line.
//!
//! Trains run between two stations of the line, stopping at a random subset of
//! the intermediate stations. Each stop-to-stop segment is one trip. The two
//! terminal stations are the crew bases. A fixed full-line train leaves each
//! base at 05:00 so that every instance has an early sign-in at both bases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Edge, EdgeKind, Node, NodeKind, TimeSpaceGraph, MAX_WORK, MIN_TRANSIT};

const MAX_ATTEMPTS: usize = 100;
const FIXED_TRAIN_DEPARTURE: u32 = 300;
const DWELL: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n_stations: usize,
    /// Inclusive range of randomly drawn trains (the fixed trains come on top).
    pub n_trains: (usize, usize),
    /// Half-open window `[start, end)` of train operation, minutes from midnight.
    pub day_window: (u32, u32),
    /// Inclusive range of the running time between adjacent stations.
    pub travel_time_range: (u32, u32),
    /// Inclusive range of accepted node counts.
    pub node_range: (usize, usize),
    /// Probability that a train stops at an intermediate station.
    pub stop_probability: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_stations: 5,
            n_trains: (58, 82),
            day_window: (300, 1380),
            travel_time_range: (20, 40),
            node_range: (80, 140),
            stop_probability: 0.5,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig {
            seed,
            ..Default::default()
        }
    }

    /// Denser timetable whose total edge count grows by roughly `factor`.
    ///
    /// Connection edges grow quadratically with the number of trips, so the
    /// train count (and the accepted node range) scale with `sqrt(factor)`.
    pub fn scaled(mut self, factor: f64) -> Self {
        let k = factor.max(0.0).sqrt();
        let scale = |v: usize| (v as f64 * k).round() as usize;
        self.n_trains = (scale(self.n_trains.0), scale(self.n_trains.1));
        self.node_range = (scale(self.node_range.0), scale(self.node_range.1));
        self
    }

    fn check(&self) -> Result<(), GenError> {
        let bad = |msg: &str| Err(GenError::InvalidConfig(msg.to_string()));
        if self.n_stations < 2 {
            return bad("n_stations must be at least 2");
        }
        if self.day_window.0 >= self.day_window.1 || self.day_window.1 > 1440 {
            return bad("day_window must be a nonempty window inside [0, 1440)");
        }
        if self.n_trains.0 > self.n_trains.1
            || self.travel_time_range.0 > self.travel_time_range.1
            || self.node_range.0 > self.node_range.1
        {
            return bad("ranges must be nonempty");
        }
        if self.travel_time_range.0 == 0 {
            return bad("travel times must be positive");
        }
        if !(0.0..=1.0).contains(&self.stop_probability) {
            return bad("stop_probability must lie in [0, 1]");
        }
        let full_line = self.travel_time_range.1 * (self.n_stations as u32 - 1)
            + DWELL * (self.n_stations as u32 - 2);
        if FIXED_TRAIN_DEPARTURE + full_line >= self.day_window.1 {
            return bad("day window too short for the fixed trains");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("no instance within node range {range:?} after {attempts} attempts")]
    GenerationExhausted { range: (usize, usize), attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Trip {
    t_dep: u32,
    t_arr: u32,
    from: usize,
    to: usize,
}

pub fn generate(cfg: &GenConfig) -> Result<TimeSpaceGraph, GenError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bases = [0, cfg.n_stations - 1];
    for _ in 0..MAX_ATTEMPTS {
        let trips = feasible_trips(draw_timetable(cfg, &mut rng), &bases);
        let node_count = trips.len() + 2 * bases.len() + 1;
        if (cfg.node_range.0..=cfg.node_range.1).contains(&node_count) {
            return Ok(build_graph(cfg.n_stations, &bases, &trips));
        }
    }
    Err(GenError::GenerationExhausted {
        range: cfg.node_range,
        attempts: MAX_ATTEMPTS,
    })
}

fn draw_timetable(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Vec<Trip> {
    let s = cfg.n_stations;
    // travel[k] = running time between station k and k + 1
    let travel: Vec<u32> = (0..s - 1)
        .map(|_| rng.gen_range(cfg.travel_time_range.0..=cfg.travel_time_range.1))
        .collect();
    let run = |a: usize, b: usize| -> u32 {
        let (lo, hi) = (a.min(b), a.max(b));
        travel[lo..hi].iter().sum()
    };

    let mut trips = Vec::new();
    let add_train = |stops: &[usize], departure: u32, trips: &mut Vec<Trip>| {
        let mut t = departure;
        for w in stops.windows(2) {
            let t_arr = t + run(w[0], w[1]);
            trips.push(Trip { t_dep: t, t_arr, from: w[0], to: w[1] });
            t = t_arr + DWELL;
        }
    };

    let all_down: Vec<usize> = (0..s).collect();
    let all_up: Vec<usize> = (0..s).rev().collect();
    add_train(&all_down, FIXED_TRAIN_DEPARTURE, &mut trips);
    add_train(&all_up, FIXED_TRAIN_DEPARTURE, &mut trips);

    let n_trains = rng.gen_range(cfg.n_trains.0..=cfg.n_trains.1);
    for _ in 0..n_trains {
        let from = rng.gen_range(0..s);
        let mut to = rng.gen_range(0..s - 1);
        if to >= from {
            to += 1;
        }
        let mut stops = vec![from];
        let step: isize = if to > from { 1 } else { -1 };
        let mut k = from as isize + step;
        while k != to as isize {
            if rng.gen_bool(cfg.stop_probability) {
                stops.push(k as usize);
            }
            k += step;
        }
        stops.push(to);
        let duration = run(from, to) + DWELL * (stops.len() as u32 - 2);
        let latest = cfg.day_window.1.saturating_sub(duration + 1).max(cfg.day_window.0);
        let departure = rng.gen_range(cfg.day_window.0..=latest);
        add_train(&stops, departure, &mut trips);
    }
    trips.sort();
    trips
}

fn connects(a: &Trip, b: &Trip) -> bool {
    a.to == b.from && b.t_dep >= a.t_arr + MIN_TRANSIT
}

/// Drops trips that no duty can cover within the working-time cap.
///
/// `latest_start` is the latest first-trip departure of any chain reaching a
/// trip; chains only move forward in time, so one pass in departure order is
/// enough.
fn feasible_trips(trips: Vec<Trip>, bases: &[usize]) -> Vec<Trip> {
    let mut kept: Vec<(Trip, u32)> = Vec::with_capacity(trips.len());
    for trip in trips {
        let mut latest: Option<u32> = bases.contains(&trip.from).then_some(trip.t_dep);
        for (pred, start) in &kept {
            if connects(pred, &trip) {
                latest = Some(latest.map_or(*start, |l| l.max(*start)));
            }
        }
        if let Some(start) = latest {
            if trip.t_arr - start <= MAX_WORK {
                kept.push((trip, start));
            }
        }
    }
    kept.into_iter().map(|(t, _)| t).collect()
}

fn build_graph(stations: usize, bases: &[usize], trips: &[Trip]) -> TimeSpaceGraph {
    let k = trips.len();
    let mut nodes: Vec<Node> = trips
        .iter()
        .enumerate()
        .map(|(i, t)| Node::service(i, t.from, t.to, t.t_dep, t.t_arr))
        .collect();
    let source_of = |b: usize| k + b;
    let sink_of = |b: usize| k + bases.len() + b;
    let deadhead = k + 2 * bases.len();
    for (b, &station) in bases.iter().enumerate() {
        nodes.push(Node::source(source_of(b), station));
    }
    for (b, &station) in bases.iter().enumerate() {
        nodes.push(Node::sink(sink_of(b), station));
    }
    nodes.push(Node::deadhead(deadhead));
    debug_assert_eq!(nodes[deadhead].kind, NodeKind::Deadhead);

    let mut edges: Vec<Edge> = Vec::new();
    let mut push = |kind: EdgeKind, tail: usize, head: usize, time_use: u32| {
        edges.push(Edge {
            id: edges.len(),
            kind,
            tail,
            head,
            time_use,
            fixed_cost: kind.fixed_cost(),
        });
    };
    let base_index = |station: usize| bases.iter().position(|&b| b == station);

    for (i, t) in trips.iter().enumerate() {
        if let Some(b) = base_index(t.from) {
            push(EdgeKind::SignIn, source_of(b), i, t.t_arr - t.t_dep);
        }
    }
    for (i, a) in trips.iter().enumerate() {
        for (j, b) in trips.iter().enumerate() {
            if connects(a, b) {
                push(EdgeKind::Connection, i, j, b.t_arr - a.t_arr);
            }
        }
    }
    for (i, t) in trips.iter().enumerate() {
        match base_index(t.to) {
            Some(b) => push(EdgeKind::SignOff, i, sink_of(b), 0),
            None => push(EdgeKind::DeadheadEdge, i, deadhead, 0),
        }
    }

    TimeSpaceGraph::build_adjacency(stations, bases.to_vec(), nodes, edges)
        .expect("time-forward connections form a DAG")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EdgeCensus {
    pub sign_in: usize,
    pub sign_off: usize,
    pub deadhead: usize,
    pub connection: usize,
}

impl EdgeCensus {
    pub fn total(&self) -> usize {
        self.sign_in + self.sign_off + self.deadhead + self.connection
    }
}

pub fn edge_census(g: &TimeSpaceGraph) -> EdgeCensus {
    let mut c = EdgeCensus::default();
    for e in g.edges() {
        match e.kind {
            EdgeKind::SignIn => c.sign_in += 1,
            EdgeKind::SignOff => c.sign_off += 1,
            EdgeKind::DeadheadEdge => c.deadhead += 1,
            EdgeKind::Connection => c.connection += 1,
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{serialize_instance, validate_graph};

    #[test]
    fn deterministic() {
        let a = generate(&GenConfig::with_seed(1)).unwrap();
        let b = generate(&GenConfig::with_seed(1)).unwrap();
        assert_eq!(serialize_instance(&a), serialize_instance(&b));
        let c = generate(&GenConfig::with_seed(2)).unwrap();
        assert_ne!(serialize_instance(&a), serialize_instance(&c));
    }

    #[test]
    fn terminal_edges_match_station() {
        let g = generate(&GenConfig::with_seed(3)).unwrap();
        assert!(validate_graph(&g).is_empty());
        for node in g.nodes().iter().filter(|n| n.kind == NodeKind::Service) {
            let at_base = g.is_crew_base(node.station_arr.unwrap());
            let kinds: Vec<EdgeKind> = g.out_edges(node.id).iter().map(|&e| g.edge(e).kind).collect();
            assert_eq!(kinds.contains(&EdgeKind::SignOff), at_base);
            assert_eq!(kinds.contains(&EdgeKind::DeadheadEdge), !at_base);
        }
    }

    #[test]
    fn empty_census() {
        let g = TimeSpaceGraph::build_adjacency(2, vec![0], vec![], vec![]).unwrap();
        assert_eq!(edge_census(&g), EdgeCensus::default());
        assert_eq!(edge_census(&g).total(), 0);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = GenConfig { n_stations: 1, ..Default::default() };
        assert!(matches!(generate(&cfg), Err(GenError::InvalidConfig(_))));
        let cfg = GenConfig { node_range: (5, 6), ..Default::default() };
        assert!(matches!(generate(&cfg), Err(GenError::GenerationExhausted { .. })));
    }
}
