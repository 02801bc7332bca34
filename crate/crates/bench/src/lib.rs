//! Shared fixtures for the benchmarks.

use traffic_core::agent::AgentKind;
use traffic_core::network::NodeId;
use traffic_core::simulation::ScenarioConfig;
use traffic_core::{CongestionSnapshot, RoadGraph};

/// Every ordered pair of distinct nodes.
pub fn all_pairs(graph: &RoadGraph) -> Vec<(NodeId, NodeId)> {
    let ids: Vec<NodeId> = graph.node_ids().collect();
    ids.iter()
        .flat_map(|&a| ids.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
        .collect()
}

/// A snapshot with every third edge reported as congested.
pub fn busy_snapshot(graph: &RoadGraph) -> CongestionSnapshot {
    CongestionSnapshot::from_entries(
        0.0,
        graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 3 == 0)
            .map(|(i, e)| (e.u.0, e.v.0, 1.5 + (i % 4) as f64)),
    )
}

/// High-density run: 40 agents spawned within 10 s.
pub fn dense_scenario(arm: AgentKind) -> ScenarioConfig {
    ScenarioConfig {
        name: "bench".to_string(),
        agents: 40,
        spawn_window: 10.0,
        arm,
        ..ScenarioConfig::default()
    }
}
