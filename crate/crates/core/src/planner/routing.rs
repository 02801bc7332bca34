use crate::congestion::CongestionSnapshot;
use crate::network::{astar_shortest_path, shortest_path_by, NetworkError, NodeId, Path, RoadGraph};

/// Static shortest-distance route.
pub fn plan_static(graph: &RoadGraph, origin: NodeId, destination: NodeId) -> Result<Path, NetworkError> {
    astar_shortest_path(graph, origin, destination)
}

/// Dijkstra on `length * CF`, where edges missing from the snapshot count
/// as uncongested. Ties go to the smaller next node id, so with an empty
/// snapshot the result matches [`plan_static`] exactly.
pub fn plan_congestion_aware(
    graph: &RoadGraph,
    snapshot: &CongestionSnapshot,
    origin: NodeId,
    destination: NodeId,
) -> Result<Path, NetworkError> {
    let weights = edge_weights(graph, snapshot);
    shortest_path_by(graph, origin, destination, |e| weights[e], |_| 0.0).map(|(path, _)| path)
}

/// `Σ length · CF` along a path, `None` if a hop is not a road.
pub fn route_cost(graph: &RoadGraph, snapshot: &CongestionSnapshot, path: &[NodeId]) -> Option<f64> {
    path.windows(2)
        .map(|w| {
            graph
                .edge_between(w[0], w[1])
                .map(|e| e.length * snapshot.factor(w[0], w[1]))
        })
        .sum()
}

fn edge_weights(graph: &RoadGraph, snapshot: &CongestionSnapshot) -> Vec<f64> {
    let mut weights: Vec<f64> = graph.edges().iter().map(|e| e.length).collect();
    for entry in &snapshot.entries {
        if let Some(i) = graph.edge_index(entry.u, entry.v) {
            weights[i] *= entry.cf.max(1.0);
        }
    }
    weights
}
