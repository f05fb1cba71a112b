//! Time-space network for railway crew scheduling.
//!
//! Nodes are trips (Service), crew-base terminals (Source/Sink, one pair per
//! base) and a single global Deadhead terminal. Edges are the legal moves of a
//! duty: sign-in, connection, sign-off and deadhead. Node and edge ids are
//! dense so that LP columns and GNN tensors can index plain arrays.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum transit time between two connected trips, in minutes.
pub const MIN_TRANSIT: u32 = 15;
/// Maximum working time of a duty, in minutes.
pub const MAX_WORK: u32 = 480;
/// Fixed cost of ending a duty at a crew base.
pub const SIGN_OFF_COST: f64 = 1.0;
/// Fixed cost of ending a duty away from a crew base.
pub const DEADHEAD_COST: f64 = 1.5;

/// Version tag written into every instance file.
pub const INSTANCE_FORMAT: &str = "rcsp-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Source,
    Sink,
    Service,
    Deadhead,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [
        NodeKind::Source,
        NodeKind::Sink,
        NodeKind::Service,
        NodeKind::Deadhead,
    ];

    pub fn index(self) -> usize {
        match self {
            NodeKind::Source => 0,
            NodeKind::Sink => 1,
            NodeKind::Service => 2,
            NodeKind::Deadhead => 3,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, NodeKind::Sink | NodeKind::Deadhead)
    }
}

/// A node of the time-space network.
///
/// Only Service nodes carry trip times. Source and Sink nodes have both
/// stations set to their crew base and times 0. The Deadhead node has no
/// station (`None`) and times 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub station_dep: Option<usize>,
    pub station_arr: Option<usize>,
    pub t_dep: u32,
    pub t_arr: u32,
}

impl Node {
    pub fn service(id: usize, station_dep: usize, station_arr: usize, t_dep: u32, t_arr: u32) -> Self {
        Node {
            id,
            kind: NodeKind::Service,
            station_dep: Some(station_dep),
            station_arr: Some(station_arr),
            t_dep,
            t_arr,
        }
    }

    pub fn source(id: usize, base: usize) -> Self {
        Node {
            id,
            kind: NodeKind::Source,
            station_dep: Some(base),
            station_arr: Some(base),
            t_dep: 0,
            t_arr: 0,
        }
    }

    pub fn sink(id: usize, base: usize) -> Self {
        Node {
            kind: NodeKind::Sink,
            ..Node::source(id, base)
        }
    }

    pub fn deadhead(id: usize) -> Self {
        Node {
            id,
            kind: NodeKind::Deadhead,
            station_dep: None,
            station_arr: None,
            t_dep: 0,
            t_arr: 0,
        }
    }

    /// Trip duration in minutes; 0 for non-service nodes.
    pub fn duration(&self) -> u32 {
        self.t_arr.saturating_sub(self.t_dep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    SignIn,
    SignOff,
    DeadheadEdge,
    Connection,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [
        EdgeKind::SignIn,
        EdgeKind::SignOff,
        EdgeKind::DeadheadEdge,
        EdgeKind::Connection,
    ];

    pub fn index(self) -> usize {
        match self {
            EdgeKind::SignIn => 0,
            EdgeKind::SignOff => 1,
            EdgeKind::DeadheadEdge => 2,
            EdgeKind::Connection => 3,
        }
    }

    /// Endpoint kinds this edge kind must connect.
    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeKind::SignIn => (NodeKind::Source, NodeKind::Service),
            EdgeKind::SignOff => (NodeKind::Service, NodeKind::Sink),
            EdgeKind::DeadheadEdge => (NodeKind::Service, NodeKind::Deadhead),
            EdgeKind::Connection => (NodeKind::Service, NodeKind::Service),
        }
    }

    pub fn fixed_cost(self) -> f64 {
        match self {
            EdgeKind::SignOff => SIGN_OFF_COST,
            EdgeKind::DeadheadEdge => DEADHEAD_COST,
            EdgeKind::SignIn | EdgeKind::Connection => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub kind: EdgeKind,
    pub tail: usize,
    pub head: usize,
    /// Working-time consumption in minutes.
    pub time_use: u32,
    pub fixed_cost: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node at position {position} has id {id}")]
    NodeIdMismatch { position: usize, id: usize },
    #[error("edge at position {position} has id {id}")]
    EdgeIdMismatch { position: usize, id: usize },
    #[error("edge {edge} references unknown node {node}")]
    InvalidEndpoint { edge: usize, node: usize },
    #[error("directed cycle detected ({remaining} nodes left unordered)")]
    CycleDetected { remaining: usize },
}

/// Immutable time-space network with adjacency and a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSpaceGraph {
    stations: usize,
    crew_bases: Vec<usize>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    topo_order: Vec<usize>,
    // service node id -> row index, and back
    row_of: Vec<Option<usize>>,
    service_nodes: Vec<usize>,
}

impl TimeSpaceGraph {
    /// Builds adjacency lists and a topological order, rejecting cyclic input.
    pub fn build_adjacency(
        stations: usize,
        mut crew_bases: Vec<usize>,
        nodes: Vec<Node>,
        edges: Vec<Edge>,
    ) -> Result<Self, GraphError> {
        crew_bases.sort_unstable();
        crew_bases.dedup();
        for (position, node) in nodes.iter().enumerate() {
            if node.id != position {
                return Err(GraphError::NodeIdMismatch { position, id: node.id });
            }
        }
        let n = nodes.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (position, edge) in edges.iter().enumerate() {
            if edge.id != position {
                return Err(GraphError::EdgeIdMismatch { position, id: edge.id });
            }
            for node in [edge.tail, edge.head] {
                if node >= n {
                    return Err(GraphError::InvalidEndpoint { edge: edge.id, node });
                }
            }
            out_edges[edge.tail].push(edge.id);
            in_edges[edge.head].push(edge.id);
        }

        // Kahn's algorithm
        let mut indegree: Vec<usize> = in_edges.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut topo_order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            topo_order.push(v);
            for &e in &out_edges[v] {
                let h = edges[e].head;
                indegree[h] -= 1;
                if indegree[h] == 0 {
                    queue.push_back(h);
                }
            }
        }
        if topo_order.len() != n {
            return Err(GraphError::CycleDetected {
                remaining: n - topo_order.len(),
            });
        }

        let mut row_of = vec![None; n];
        let mut service_nodes = Vec::new();
        for node in &nodes {
            if node.kind == NodeKind::Service {
                row_of[node.id] = Some(service_nodes.len());
                service_nodes.push(node.id);
            }
        }

        Ok(TimeSpaceGraph {
            stations,
            crew_bases,
            nodes,
            edges,
            out_edges,
            in_edges,
            topo_order,
            row_of,
            service_nodes,
        })
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    pub fn crew_bases(&self) -> &[usize] {
        &self.crew_bases
    }

    pub fn is_crew_base(&self, station: usize) -> bool {
        self.crew_bases.binary_search(&station).is_ok()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Number of covering rows, i.e. Service nodes.
    pub fn num_rows(&self) -> usize {
        self.service_nodes.len()
    }

    /// Row index of a Service node.
    pub fn row_of(&self, node: usize) -> Option<usize> {
        self.row_of[node]
    }

    /// Service node id for a row.
    pub fn service_node(&self, row: usize) -> usize {
        self.service_nodes[row]
    }

    /// Ids of Connection edges in ascending order.
    pub fn connection_edges(&self) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Connection)
            .map(|e| e.id)
            .collect()
    }

    /// Subgraph keeping all nodes and the edges selected by `keep`.
    ///
    /// Edge ids are re-densified; the returned vector maps each new edge id
    /// to its id in `self`.
    pub fn edge_subgraph(&self, keep: impl Fn(&Edge) -> bool) -> (TimeSpaceGraph, Vec<usize>) {
        let mut mapping = Vec::new();
        let mut edges = Vec::new();
        for e in self.edges.iter().filter(|e| keep(e)) {
            edges.push(Edge {
                id: edges.len(),
                ..e.clone()
            });
            mapping.push(e.id);
        }
        let g = TimeSpaceGraph::build_adjacency(
            self.stations,
            self.crew_bases.clone(),
            self.nodes.clone(),
            edges,
        )
        .expect("edge subgraph of a DAG is a DAG");
        (g, mapping)
    }
    /// Subgraph induced by the nodes with `keep[id] == true`, with node and
    /// edge ids re-densified in their original order.
    pub fn induced_subgraph(&self, keep: &[bool]) -> TimeSpaceGraph {
        assert_eq!(keep.len(), self.nodes.len());
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for node in self.nodes.iter().filter(|n| keep[n.id]) {
            remap[node.id] = nodes.len();
            nodes.push(Node {
                id: nodes.len(),
                ..node.clone()
            });
        }
        let mut edges = Vec::new();
        for e in self.edges.iter().filter(|e| keep[e.tail] && keep[e.head]) {
            edges.push(Edge {
                id: edges.len(),
                tail: remap[e.tail],
                head: remap[e.head],
                ..e.clone()
            });
        }
        TimeSpaceGraph::build_adjacency(self.stations, self.crew_bases.clone(), nodes, edges)
            .expect("induced subgraph of a DAG is a DAG")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    EndpointKind { expected: (NodeKind, NodeKind), found: (NodeKind, NodeKind) },
    ShortTransit { gap: i64 },
    StationMismatch,
    WrongCost { expected: f64, found: f64 },
    ServiceTimes,
    MissingStation,
    NotAtCrewBase,
    DeadheadHasStation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: Option<usize>,
    pub edge: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(e) = self.edge {
            write!(f, "edge {e}: ")?;
        }
        if let Some(n) = self.node {
            write!(f, "node {n}: ")?;
        }
        write!(f, "{:?}", self.kind)
    }
}

/// Lists every invariant violation of `g`. Empty iff the graph is valid.
pub fn validate_graph(g: &TimeSpaceGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let node_violation = |node: usize, kind| Violation {
        node: Some(node),
        edge: None,
        kind,
    };
    for node in g.nodes() {
        match node.kind {
            NodeKind::Service => match (node.station_dep, node.station_arr) {
                (Some(_), Some(_)) => {
                    if node.t_arr <= node.t_dep {
                        out.push(node_violation(node.id, ViolationKind::ServiceTimes));
                    }
                }
                _ => out.push(node_violation(node.id, ViolationKind::MissingStation)),
            },
            NodeKind::Source | NodeKind::Sink => match (node.station_dep, node.station_arr) {
                (Some(d), Some(a)) if d == a && g.is_crew_base(d) => {}
                (Some(_), Some(_)) => out.push(node_violation(node.id, ViolationKind::NotAtCrewBase)),
                _ => out.push(node_violation(node.id, ViolationKind::MissingStation)),
            },
            NodeKind::Deadhead => {
                if node.station_dep.is_some() || node.station_arr.is_some() {
                    out.push(node_violation(node.id, ViolationKind::DeadheadHasStation));
                }
            }
        }
    }

    for edge in g.edges() {
        let tail = g.node(edge.tail);
        let head = g.node(edge.head);
        let violation = |kind| Violation {
            node: None,
            edge: Some(edge.id),
            kind,
        };
        let expected = edge.kind.endpoints();
        if (tail.kind, head.kind) != expected {
            out.push(violation(ViolationKind::EndpointKind {
                expected,
                found: (tail.kind, head.kind),
            }));
            continue;
        }
        let expected_cost = edge.kind.fixed_cost();
        if edge.fixed_cost != expected_cost {
            out.push(violation(ViolationKind::WrongCost {
                expected: expected_cost,
                found: edge.fixed_cost,
            }));
        }
        match edge.kind {
            EdgeKind::Connection => {
                let gap = head.t_dep as i64 - tail.t_arr as i64;
                if gap < MIN_TRANSIT as i64 {
                    out.push(violation(ViolationKind::ShortTransit { gap }));
                }
                if head.station_dep != tail.station_arr {
                    out.push(violation(ViolationKind::StationMismatch));
                }
            }
            EdgeKind::SignIn => {
                if head.station_dep != tail.station_arr {
                    out.push(violation(ViolationKind::StationMismatch));
                }
            }
            EdgeKind::SignOff => {
                if tail.station_arr != head.station_dep {
                    out.push(violation(ViolationKind::StationMismatch));
                }
            }
            EdgeKind::DeadheadEdge => {
                if tail.station_arr.is_some_and(|s| g.is_crew_base(s)) {
                    out.push(violation(ViolationKind::StationMismatch));
                }
            }
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format: String,
    stations: usize,
    crew_bases: Vec<usize>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Serializes `g` as an `rcsp-v1` JSON document, one node or edge per line.
pub fn serialize_instance(g: &TimeSpaceGraph) -> Vec<u8> {
    let mut s = String::new();
    s.push_str("{\n");
    s.push_str(&format!("  \"format\": \"{INSTANCE_FORMAT}\",\n"));
    s.push_str(&format!("  \"stations\": {},\n", g.stations));
    s.push_str(&format!(
        "  \"crew_bases\": {},\n",
        serde_json::to_string(&g.crew_bases).unwrap()
    ));
    push_array(&mut s, "nodes", &g.nodes, true);
    push_array(&mut s, "edges", &g.edges, false);
    s.push_str("}\n");
    s.into_bytes()
}

fn push_array<T: Serialize>(s: &mut String, name: &str, items: &[T], trailing_comma: bool) {
    s.push_str(&format!("  \"{name}\": ["));
    for (i, item) in items.iter().enumerate() {
        s.push_str(if i == 0 { "\n    " } else { ",\n    " });
        s.push_str(&serde_json::to_string(item).unwrap());
    }
    if !items.is_empty() {
        s.push_str("\n  ");
    }
    s.push(']');
    if trailing_comma {
        s.push(',');
    }
    s.push('\n');
}

pub fn parse_instance(bytes: &[u8]) -> Result<TimeSpaceGraph, ParseError> {
    let file: InstanceFile = serde_json::from_slice(bytes).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.format != INSTANCE_FORMAT {
        return Err(ParseError::Field {
            field: "format".into(),
            message: format!("expected \"{INSTANCE_FORMAT}\", found \"{}\"", file.format),
        });
    }
    let in_range = |s: &Option<usize>| s.is_none_or(|s| s < file.stations);
    if let Some(b) = file.crew_bases.iter().find(|&&b| b >= file.stations) {
        return Err(ParseError::Field {
            field: "crew_bases".into(),
            message: format!("station {b} out of range"),
        });
    }
    if let Some(n) = file
        .nodes
        .iter()
        .find(|n| !in_range(&n.station_dep) || !in_range(&n.station_arr))
    {
        return Err(ParseError::Field {
            field: format!("nodes[{}]", n.id),
            message: "station out of range".into(),
        });
    }
    Ok(TimeSpaceGraph::build_adjacency(
        file.stations,
        file.crew_bases,
        file.nodes,
        file.edges,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> TimeSpaceGraph {
        // nodes deliberately listed sink-first so topo order differs from id order
        let nodes = vec![
            Node::sink(0, 0),
            Node::service(1, 0, 0, 480, 510),
            Node::source(2, 0),
        ];
        let edges = vec![
            Edge { id: 0, kind: EdgeKind::SignIn, tail: 2, head: 1, time_use: 30, fixed_cost: 0.0 },
            Edge { id: 1, kind: EdgeKind::SignOff, tail: 1, head: 0, time_use: 0, fixed_cost: 1.0 },
        ];
        TimeSpaceGraph::build_adjacency(2, vec![0], nodes, edges).unwrap()
    }

    #[test]
    fn single_node_no_edges() {
        let g = TimeSpaceGraph::build_adjacency(1, vec![0], vec![Node::service(0, 0, 0, 10, 20)], vec![])
            .unwrap();
        assert_eq!(g.topo_order(), &[0]);
        assert!(g.out_edges(0).is_empty());
        assert!(g.in_edges(0).is_empty());
        assert_eq!(g.num_rows(), 1);
    }

    #[test]
    fn chain_topo_order() {
        let g = chain();
        assert_eq!(g.topo_order(), &[2, 1, 0]);
        assert!(validate_graph(&g).is_empty());
    }

    #[test]
    fn cycle_rejected() {
        let nodes = vec![Node::service(0, 0, 0, 0, 10), Node::service(1, 0, 0, 30, 40)];
        let conn = |id, tail, head| Edge { id, kind: EdgeKind::Connection, tail, head, time_use: 0, fixed_cost: 0.0 };
        let err = TimeSpaceGraph::build_adjacency(1, vec![0], nodes, vec![conn(0, 0, 1), conn(1, 1, 0)]);
        assert_eq!(err.unwrap_err(), GraphError::CycleDetected { remaining: 2 });
    }

    #[test]
    fn bad_endpoint_rejected() {
        let nodes = vec![Node::service(0, 0, 0, 0, 10)];
        let e = Edge { id: 0, kind: EdgeKind::Connection, tail: 0, head: 3, time_use: 0, fixed_cost: 0.0 };
        assert!(matches!(
            TimeSpaceGraph::build_adjacency(1, vec![0], nodes, vec![e]),
            Err(GraphError::InvalidEndpoint { edge: 0, node: 3 })
        ));
    }

    #[test]
    fn detects_short_transit_and_bad_cost() {
        let nodes = vec![
            Node::source(0, 0),
            Node::sink(1, 0),
            Node::service(2, 0, 1, 100, 130),
            Node::service(3, 1, 0, 140, 170),
        ];
        let edges = vec![
            Edge { id: 0, kind: EdgeKind::SignIn, tail: 0, head: 2, time_use: 30, fixed_cost: 0.0 },
            Edge { id: 1, kind: EdgeKind::Connection, tail: 2, head: 3, time_use: 40, fixed_cost: 0.0 },
            Edge { id: 2, kind: EdgeKind::SignOff, tail: 3, head: 1, time_use: 0, fixed_cost: 1.5 },
        ];
        let g = TimeSpaceGraph::build_adjacency(2, vec![0], nodes, edges).unwrap();
        let v = validate_graph(&g);
        assert_eq!(v.len(), 2, "{v:?}");
        assert_eq!(v[0].edge, Some(1));
        assert_eq!(v[0].kind, ViolationKind::ShortTransit { gap: 10 });
        assert_eq!(v[1].edge, Some(2));
        assert!(matches!(v[1].kind, ViolationKind::WrongCost { .. }));
    }

    #[test]
    fn round_trip_and_truncation() {
        let g = chain();
        let bytes = serialize_instance(&g);
        assert_eq!(parse_instance(&bytes).unwrap(), g);
        let err = parse_instance(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }), "{err}");
    }

    #[test]
    fn wrong_format_tag() {
        let text = String::from_utf8(serialize_instance(&chain())).unwrap().replace("rcsp-v1", "rcsp-v0");
        assert!(matches!(parse_instance(text.as_bytes()), Err(ParseError::Field { .. })));
    }
}
