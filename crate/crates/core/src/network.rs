//! Road network topology: intersections, undirected road segments, static
//! shortest paths and path validation.
//!
//! Node ids are dense (`0..N`) so per-node state can live in plain vectors.
//! Edges are stored canonically with `u < v`; an explicit `length` is kept per
//! edge rather than recomputed from positions, and it may never be shorter
//! than the straight line between its endpoints. That lower bound is what
//! makes the straight-line A* heuristic admissible.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intersection identifier, dense within a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(v)
    }
}

/// 2D position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub position: Point,
}

impl Node {
    pub fn new(id: usize, x: f64, y: f64) -> Self {
        Node {
            id: NodeId(id),
            position: Point::new(x, y),
        }
    }
}

/// Canonical key of an undirected edge (`u < v`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey {
    pub u: NodeId,
    pub v: NodeId,
}

impl EdgeKey {
    /// Orders the endpoints so that `u <= v`.
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            EdgeKey { u: a, v: b }
        } else {
            EdgeKey { u: b, v: a }
        }
    }

    pub fn other(&self, end: NodeId) -> NodeId {
        if end == self.u {
            self.v
        } else {
            self.u
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// Undirected road segment. After [`build_graph`], `u < v` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub length: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize, length: f64) -> Self {
        Edge {
            u: NodeId(u),
            v: NodeId(v),
            length,
        }
    }

    pub fn key(&self) -> EdgeKey {
        EdgeKey::new(self.u, self.v)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node id {0} appears more than once")]
    DuplicateNode(NodeId),
    #[error("node ids must be dense: expected id {expected}, found {found}")]
    SparseNodeIds { expected: usize, found: NodeId },
    #[error("node {0} has a non-finite position")]
    NonFinitePosition(NodeId),
    #[error("nodes {0} and {1} share a position")]
    DuplicatePosition(NodeId, NodeId),
    #[error("edge {0} appears more than once")]
    DuplicateEdge(EdgeKey),
    #[error("edge at node {0} is a self-loop")]
    SelfLoop(NodeId),
    #[error("edge ({u}, {v}) references unknown node {missing}")]
    UnknownEndpoint { u: NodeId, v: NodeId, missing: NodeId },
    #[error("edge {edge} has non-positive or non-finite length {length}")]
    NonpositiveLength { edge: EdgeKey, length: f64 },
    #[error("edge {edge} length {length} is shorter than the straight line {straight}")]
    ShorterThanStraightLine { edge: EdgeKey, length: f64, straight: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no route from {start} to {goal}")]
    Unreachable { start: NodeId, goal: NodeId },
    #[error("map file: {0}")]
    MapFormat(String),
}

/// Immutable road network. Safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
    index: HashMap<EdgeKey, usize>,
}

/// Slack allowed when comparing an edge length against the straight-line
/// distance, so coordinates written with limited precision still load.
const STRAIGHT_LINE_SLACK: f64 = 1e-6;

/// Validates nodes and edges and builds the adjacency lists.
///
/// Nodes may be given in any order but their ids must cover `0..N` exactly.
/// Edges are canonicalized to `u < v` and keep their input order. Each
/// adjacency list is sorted by neighbor id.
pub fn build_graph(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<RoadGraph, NetworkError> {
    if nodes.is_empty() {
        return Err(NetworkError::Empty);
    }
    let mut nodes = nodes;
    nodes.sort_by_key(|n| n.id);
    for (i, node) in nodes.iter().enumerate() {
        if i > 0 && nodes[i - 1].id == node.id {
            return Err(NetworkError::DuplicateNode(node.id));
        }
        if node.id.0 != i {
            return Err(NetworkError::SparseNodeIds {
                expected: i,
                found: node.id,
            });
        }
        if !node.position.x.is_finite() || !node.position.y.is_finite() {
            return Err(NetworkError::NonFinitePosition(node.id));
        }
    }
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            if a.position == b.position {
                return Err(NetworkError::DuplicatePosition(a.id, b.id));
            }
        }
    }

    let n = nodes.len();
    let mut canonical = Vec::with_capacity(edges.len());
    let mut index = HashMap::with_capacity(edges.len());
    let mut adjacency = vec![Vec::new(); n];
    for edge in edges {
        if edge.u == edge.v {
            return Err(NetworkError::SelfLoop(edge.u));
        }
        for end in [edge.u, edge.v] {
            if end.0 >= n {
                return Err(NetworkError::UnknownEndpoint {
                    u: edge.u,
                    v: edge.v,
                    missing: end,
                });
            }
        }
        let key = edge.key();
        if !(edge.length.is_finite() && edge.length > 0.0) {
            return Err(NetworkError::NonpositiveLength {
                edge: key,
                length: edge.length,
            });
        }
        let straight = nodes[key.u.0].position.distance(&nodes[key.v.0].position);
        if edge.length < straight - STRAIGHT_LINE_SLACK * straight.max(1.0) {
            return Err(NetworkError::ShorterThanStraightLine {
                edge: key,
                length: edge.length,
                straight,
            });
        }
        if index.contains_key(&key) {
            return Err(NetworkError::DuplicateEdge(key));
        }
        let idx = canonical.len();
        index.insert(key, idx);
        adjacency[key.u.0].push((key.v, idx));
        adjacency[key.v.0].push((key.u, idx));
        canonical.push(Edge {
            u: key.u,
            v: key.v,
            length: edge.length,
        });
    }
    for list in &mut adjacency {
        list.sort_by_key(|&(nb, _)| nb);
    }

    Ok(RoadGraph {
        nodes,
        edges: canonical,
        adjacency,
        index,
    })
}

impl RoadGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.0 < self.nodes.len()
    }

    pub fn position(&self, n: NodeId) -> Option<Point> {
        self.nodes.get(n.0).map(|node| node.position)
    }

    /// Neighbors of `n` with the index of the connecting edge, sorted by
    /// neighbor id. Empty for unknown nodes.
    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, usize)] {
        self.adjacency.get(n.0).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge_index(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.index.get(&EdgeKey::new(a, b)).copied()
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        self.edge_index(a, b).map(|i| &self.edges[i])
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.index.contains_key(&EdgeKey::new(a, b))
    }

    pub fn straight_line(&self, a: NodeId, b: NodeId) -> f64 {
        self.nodes[a.0].position.distance(&self.nodes[b.0].position)
    }

    /// True if every node can reach every other node.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![NodeId(0)];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &(m, _) in self.neighbors(n) {
                if !seen[m.0] {
                    seen[m.0] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Sum of edge lengths along `path`, or `None` if a hop is not an edge.
    pub fn path_length(&self, path: &[NodeId]) -> Option<f64> {
        path.windows(2)
            .map(|w| self.edge_between(w[0], w[1]).map(|e| e.length))
            .sum()
    }
}

pub fn node_degree(graph: &RoadGraph, n: NodeId) -> Result<usize, NetworkError> {
    if !graph.contains(n) {
        return Err(NetworkError::UnknownNode(n));
    }
    Ok(graph.neighbors(n).len())
}

/// Ordered node sequence. Paths built by the planners are simple; paths
/// parsed from external text are only structurally checked until they pass
/// [`validate_path`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path(Vec<NodeId>);

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        Path(nodes)
    }

    pub fn from_ids<I: IntoIterator<Item = usize>>(ids: I) -> Self {
        Path(ids.into_iter().map(NodeId).collect())
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn into_nodes(self) -> Vec<NodeId> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<NodeId> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<NodeId> {
        self.0.last().copied()
    }

    /// Renders the path as a compact JSON array, e.g. `[2,5,8,9]`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("node ids always serialize")
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for n in &self.0 {
            if !first {
                f.write_str("-")?;
            }
            write!(f, "{n}")?;
            first = false;
        }
        Ok(())
    }
}

/// First rule a candidate path breaks, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathVerdict {
    Ok,
    EmptyPath,
    UnknownNode(NodeId),
    WrongStart { expected: NodeId, found: NodeId },
    WrongEnd { expected: NodeId, found: NodeId },
    MissingEdge(NodeId, NodeId),
}

impl PathVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, PathVerdict::Ok)
    }
}

impl fmt::Display for PathVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathVerdict::Ok => f.write_str("ok"),
            PathVerdict::EmptyPath => f.write_str("empty path"),
            PathVerdict::UnknownNode(n) => write!(f, "unknown node {n}"),
            PathVerdict::WrongStart { expected, found } => {
                write!(f, "path starts at {found}, expected {expected}")
            }
            PathVerdict::WrongEnd { expected, found } => {
                write!(f, "path ends at {found}, expected {expected}")
            }
            PathVerdict::MissingEdge(u, v) => write!(f, "no road between {u} and {v}"),
        }
    }
}

/// Checks a path against the graph. Never fails; reports the first violation.
pub fn validate_path(
    graph: &RoadGraph,
    path: &[NodeId],
    expected_start: NodeId,
    destination: NodeId,
) -> PathVerdict {
    let (Some(&first), Some(&last)) = (path.first(), path.last()) else {
        return PathVerdict::EmptyPath;
    };
    if let Some(&bad) = path.iter().find(|n| !graph.contains(**n)) {
        return PathVerdict::UnknownNode(bad);
    }
    if first != expected_start {
        return PathVerdict::WrongStart {
            expected: expected_start,
            found: first,
        };
    }
    if last != destination {
        return PathVerdict::WrongEnd {
            expected: destination,
            found: last,
        };
    }
    for w in path.windows(2) {
        if !graph.has_edge(w[0], w[1]) {
            return PathVerdict::MissingEdge(w[0], w[1]);
        }
    }
    PathVerdict::Ok
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    f: f64,
    g: f64,
    node: NodeId,
    version: u32,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // Min-heap on (f, g, node) via reversed comparison.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.version.cmp(&self.version))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn tie_eps(cost: f64) -> f64 {
    1e-9 * cost.abs().max(1.0)
}

/// Best-first search for the cheapest simple path from `start` to `goal`.
///
/// `edge_cost` maps an edge index to a strictly positive cost and `heuristic`
/// must be consistent with it (use `|_| 0.0` for Dijkstra). Among paths whose
/// costs agree within a relative `1e-9`, the lexicographically smallest node
/// sequence wins, i.e. ties break toward the smaller next node id. Labels are
/// corrected when a tying path is found late, so the result does not depend
/// on heap order or the heuristic.
pub fn shortest_path_by<C, H>(
    graph: &RoadGraph,
    start: NodeId,
    goal: NodeId,
    edge_cost: C,
    heuristic: H,
) -> Result<(Path, f64), NetworkError>
where
    C: Fn(usize) -> f64,
    H: Fn(NodeId) -> f64,
{
    for n in [start, goal] {
        if !graph.contains(n) {
            return Err(NetworkError::UnknownNode(n));
        }
    }
    if start == goal {
        return Ok((Path(vec![start]), 0.0));
    }

    let n = graph.node_count();
    let mut labels: Vec<Option<(f64, Vec<NodeId>)>> = vec![None; n];
    let mut versions = vec![0u32; n];
    let mut heap = BinaryHeap::new();
    labels[start.0] = Some((0.0, vec![start]));
    heap.push(Frontier {
        f: heuristic(start),
        g: 0.0,
        node: start,
        version: 0,
    });
    let mut best_goal = f64::INFINITY;

    while let Some(entry) = heap.pop() {
        if entry.f > best_goal + tie_eps(best_goal) {
            break;
        }
        if entry.version != versions[entry.node.0] {
            continue;
        }
        if entry.node == goal {
            best_goal = entry.g;
            continue;
        }
        let (g, path) = labels[entry.node.0].clone().expect("queued nodes have labels");
        for &(next, edge) in graph.neighbors(entry.node) {
            if path.contains(&next) {
                continue;
            }
            let candidate_cost = g + edge_cost(edge);
            let improves = match &labels[next.0] {
                None => true,
                Some((cost, existing)) => {
                    let eps = tie_eps(*cost);
                    if candidate_cost < cost - eps {
                        true
                    } else if candidate_cost <= cost + eps {
                        // Tie: compare sequences without allocating.
                        path.iter()
                            .chain(std::iter::once(&next))
                            .cmp(existing.iter())
                            == Ordering::Less
                    } else {
                        false
                    }
                }
            };
            if improves {
                let mut extended = path.clone();
                extended.push(next);
                labels[next.0] = Some((candidate_cost, extended));
                versions[next.0] += 1;
                heap.push(Frontier {
                    f: candidate_cost + heuristic(next),
                    g: candidate_cost,
                    node: next,
                    version: versions[next.0],
                });
            }
        }
    }

    match labels[goal.0].take() {
        Some((cost, path)) => Ok((Path(path), cost)),
        None => Err(NetworkError::Unreachable { start, goal }),
    }
}

/// Minimum-length path using the straight-line distance to `goal` as the
/// heuristic. Ties go to the smaller next node id.
pub fn astar_shortest_path(
    graph: &RoadGraph,
    start: NodeId,
    goal: NodeId,
) -> Result<Path, NetworkError> {
    if !graph.contains(goal) {
        return Err(NetworkError::UnknownNode(goal));
    }
    let goal_pos = graph.nodes[goal.0].position;
    shortest_path_by(
        graph,
        start,
        goal,
        |e| graph.edges[e].length,
        |n| graph.nodes[n.0].position.distance(&goal_pos),
    )
    .map(|(path, _)| path)
}

/// Grid spacing of the default map, in meters.
pub const DEFAULT_SPACING: f64 = 150.0;

/// The 12-intersection, 20-segment experiment map: a 4-column by 3-row grid
/// with 150 m spacing (node id `row * 4 + col`), plus diagonal shortcuts
/// 0–5, 5–10 and 6–11.
pub fn default_map() -> RoadGraph {
    const COLS: usize = 4;
    const ROWS: usize = 3;
    let nodes: Vec<Node> = (0..ROWS)
        .flat_map(|r| {
            (0..COLS).map(move |c| {
                Node::new(r * COLS + c, c as f64 * DEFAULT_SPACING, r as f64 * DEFAULT_SPACING)
            })
        })
        .collect();
    let mut pairs = Vec::new();
    for r in 0..ROWS {
        for c in 0..COLS - 1 {
            pairs.push((r * COLS + c, r * COLS + c + 1));
        }
    }
    for r in 0..ROWS - 1 {
        for c in 0..COLS {
            pairs.push((r * COLS + c, (r + 1) * COLS + c));
        }
    }
    pairs.extend([(0, 5), (5, 10), (6, 11)]);
    let edges = pairs
        .into_iter()
        .map(|(u, v)| Edge::new(u, v, nodes[u].position.distance(&nodes[v].position)))
        .collect();
    build_graph(nodes, edges).expect("default map is well formed")
}

/// On-disk map description. `length` defaults to the straight-line distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub nodes: Vec<MapNode>,
    pub edges: Vec<MapEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNode {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEdge {
    pub u: usize,
    pub v: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

impl MapFile {
    pub fn from_graph(graph: &RoadGraph) -> Self {
        MapFile {
            nodes: graph
                .nodes
                .iter()
                .map(|n| MapNode {
                    id: n.id.0,
                    x: n.position.x,
                    y: n.position.y,
                })
                .collect(),
            edges: graph
                .edges
                .iter()
                .map(|e| MapEdge {
                    u: e.u.0,
                    v: e.v.0,
                    length: Some(e.length),
                })
                .collect(),
        }
    }

    pub fn into_graph(self) -> Result<RoadGraph, NetworkError> {
        let positions: HashMap<usize, Point> =
            self.nodes.iter().map(|n| (n.id, Point::new(n.x, n.y))).collect();
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let length = match e.length {
                Some(len) => len,
                None => {
                    let (Some(a), Some(b)) = (positions.get(&e.u), positions.get(&e.v)) else {
                        let missing = if positions.contains_key(&e.u) { e.v } else { e.u };
                        return Err(NetworkError::UnknownEndpoint {
                            u: NodeId(e.u),
                            v: NodeId(e.v),
                            missing: NodeId(missing),
                        });
                    };
                    a.distance(b)
                }
            };
            edges.push(Edge::new(e.u, e.v, length));
        }
        let nodes = self.nodes.iter().map(|n| Node::new(n.id, n.x, n.y)).collect();
        build_graph(nodes, edges)
    }

    pub fn parse(text: &str) -> Result<RoadGraph, NetworkError> {
        let file: MapFile =
            serde_json::from_str(text).map_err(|e| NetworkError::MapFormat(e.to_string()))?;
        file.into_graph()
    }

    pub fn render(graph: &RoadGraph) -> String {
        serde_json::to_string_pretty(&MapFile::from_graph(graph)).expect("map serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_nodes() -> RoadGraph {
        build_graph(
            vec![Node::new(0, 0.0, 0.0), Node::new(1, 100.0, 0.0)],
            vec![Edge::new(0, 1, 100.0)],
        )
        .unwrap()
    }

    fn triangle() -> RoadGraph {
        let nodes = vec![
            Node::new(0, 0.0, 0.0),
            Node::new(1, 100.0, 0.0),
            Node::new(2, 50.0, 200.0),
        ];
        let edges = [(0, 1), (1, 2), (0, 2)]
            .iter()
            .map(|&(u, v)| Edge::new(u, v, nodes[u].position.distance(&nodes[v].position)))
            .collect();
        build_graph(nodes, edges).unwrap()
    }

    #[test]
    fn smallest_graph() {
        let g = two_nodes();
        assert_eq!(node_degree(&g, NodeId(0)), Ok(1));
        assert_eq!(node_degree(&g, NodeId(1)), Ok(1));
        assert_eq!(node_degree(&g, NodeId(2)), Err(NetworkError::UnknownNode(NodeId(2))));
    }

    #[test]
    fn reversed_edge_is_canonicalized() {
        let g = build_graph(
            vec![Node::new(0, 0.0, 0.0), Node::new(1, 100.0, 0.0)],
            vec![Edge::new(1, 0, 100.0)],
        )
        .unwrap();
        assert_eq!(g.edges()[0].u, NodeId(0));
        assert_eq!(g.edges()[0].v, NodeId(1));
        assert!(g.has_edge(NodeId(1), NodeId(0)));
    }

    #[test]
    fn rejects_bad_edges() {
        let nodes = || vec![Node::new(0, 0.0, 0.0), Node::new(1, 100.0, 0.0)];
        assert_eq!(
            build_graph(nodes(), vec![Edge::new(0, 0, 10.0)]),
            Err(NetworkError::SelfLoop(NodeId(0)))
        );
        assert!(matches!(
            build_graph(nodes(), vec![Edge::new(0, 7, 10.0)]),
            Err(NetworkError::UnknownEndpoint { missing: NodeId(7), .. })
        ));
        assert!(matches!(
            build_graph(nodes(), vec![Edge::new(0, 1, 0.0)]),
            Err(NetworkError::NonpositiveLength { .. })
        ));
        assert!(matches!(
            build_graph(nodes(), vec![Edge::new(0, 1, 100.0), Edge::new(1, 0, 120.0)]),
            Err(NetworkError::DuplicateEdge(_))
        ));
        assert!(matches!(
            build_graph(nodes(), vec![Edge::new(0, 1, 50.0)]),
            Err(NetworkError::ShorterThanStraightLine { .. })
        ));
        assert_eq!(build_graph(vec![], vec![]), Err(NetworkError::Empty));
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(matches!(
            build_graph(vec![Node::new(0, 0.0, 0.0), Node::new(2, 1.0, 0.0)], vec![]),
            Err(NetworkError::SparseNodeIds { expected: 1, .. })
        ));
        assert!(matches!(
            build_graph(vec![Node::new(0, 0.0, 0.0), Node::new(1, 0.0, 0.0)], vec![]),
            Err(NetworkError::DuplicatePosition(..))
        ));
        assert!(matches!(
            build_graph(vec![Node::new(0, f64::NAN, 0.0)], vec![]),
            Err(NetworkError::NonFinitePosition(_))
        ));
    }

    #[test]
    fn default_map_shape() {
        let g = default_map();
        assert_eq!(g.node_count(), 12);
        assert_eq!(g.edge_count(), 20);
        assert!(g.is_connected());
        assert_eq!(g.edge_between(NodeId(0), NodeId(1)).unwrap().length, 150.0);
        let diag = g.edge_between(NodeId(0), NodeId(5)).unwrap().length;
        assert!((diag - 150.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((diag - 212.132).abs() < 1e-3);
        assert_eq!(node_degree(&g, NodeId(0)), Ok(3));
        assert_eq!(node_degree(&g, NodeId(3)), Ok(2));
        let branching = g.node_ids().filter(|&n| node_degree(&g, n).unwrap() >= 3).count();
        assert!(branching >= 6);
    }

    #[test]
    fn identity_and_direct_paths() {
        let g = default_map();
        assert_eq!(astar_shortest_path(&g, NodeId(5), NodeId(5)).unwrap(), Path::from_ids([5]));
        let t = triangle();
        assert_eq!(astar_shortest_path(&t, NodeId(0), NodeId(1)).unwrap(), Path::from_ids([0, 1]));
    }

    #[test]
    fn unreachable_goal() {
        let g = build_graph(
            vec![Node::new(0, 0.0, 0.0), Node::new(1, 1.0, 0.0), Node::new(2, 5.0, 0.0)],
            vec![Edge::new(0, 1, 1.0)],
        )
        .unwrap();
        assert_eq!(
            astar_shortest_path(&g, NodeId(0), NodeId(2)),
            Err(NetworkError::Unreachable {
                start: NodeId(0),
                goal: NodeId(2)
            })
        );
    }

    #[test]
    fn ties_prefer_smaller_next_node() {
        // 0 -> 3 via 1 or 2, both 200 m.
        let g = build_graph(
            vec![
                Node::new(0, 0.0, 0.0),
                Node::new(1, 100.0, 0.0),
                Node::new(2, 0.0, 100.0),
                Node::new(3, 100.0, 100.0),
            ],
            vec![
                Edge::new(0, 2, 100.0),
                Edge::new(2, 3, 100.0),
                Edge::new(0, 1, 100.0),
                Edge::new(1, 3, 100.0),
            ],
        )
        .unwrap();
        assert_eq!(astar_shortest_path(&g, NodeId(0), NodeId(3)).unwrap(), Path::from_ids([0, 1, 3]));
        assert_eq!(astar_shortest_path(&g, NodeId(3), NodeId(0)).unwrap(), Path::from_ids([3, 1, 0]));
    }

    #[test]
    fn validation_verdicts() {
        // 2-5-8-9 chain plus a spur.
        let nodes = (0..10).map(|i| Node::new(i, i as f64 * 10.0, 0.0)).collect();
        let edges = vec![
            Edge::new(2, 5, 30.0),
            Edge::new(5, 8, 30.0),
            Edge::new(8, 9, 10.0),
            Edge::new(0, 1, 10.0),
        ];
        let g = build_graph(nodes, edges).unwrap();
        let ids = |v: &[usize]| v.iter().map(|&i| NodeId(i)).collect::<Vec<_>>();
        assert_eq!(validate_path(&g, &ids(&[2, 5, 8, 9]), NodeId(2), NodeId(9)), PathVerdict::Ok);
        assert_eq!(
            validate_path(&g, &ids(&[2, 9]), NodeId(2), NodeId(9)),
            PathVerdict::MissingEdge(NodeId(2), NodeId(9))
        );
        assert_eq!(validate_path(&g, &[], NodeId(2), NodeId(9)), PathVerdict::EmptyPath);
        assert_eq!(
            validate_path(&g, &ids(&[2, 55, 9]), NodeId(2), NodeId(9)),
            PathVerdict::UnknownNode(NodeId(55))
        );
        assert!(matches!(
            validate_path(&g, &ids(&[5, 8, 9]), NodeId(2), NodeId(9)),
            PathVerdict::WrongStart { .. }
        ));
        assert!(matches!(
            validate_path(&g, &ids(&[2, 5, 8]), NodeId(2), NodeId(9)),
            PathVerdict::WrongEnd { .. }
        ));
    }

    #[test]
    fn map_file_defaults_length_to_euclidean() {
        let text = r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":30,"y":40}],"edges":[{"u":1,"v":0}]}"#;
        let g = MapFile::parse(text).unwrap();
        assert_eq!(g.edges()[0].length, 50.0);
        assert_eq!(g.edges()[0].u, NodeId(0));
    }

    #[test]
    fn map_file_round_trips_default_map() {
        let g = default_map();
        assert_eq!(MapFile::parse(&MapFile::render(&g)).unwrap(), g);
        assert!(matches!(MapFile::parse("{"), Err(NetworkError::MapFormat(_))));
    }
}
