use std::fmt::Write as _;

use crate::congestion::{snapshot_to_json, CongestionSnapshot};
use crate::network::{NodeId, RoadGraph};

pub const SYSTEM_PROMPT: &str = "You are a route planner for a vehicle in a road network. \
Reason about the map and the current congestion, then reply with the route as a JSON array of node ids.";

pub const NO_CONGESTION_LINE: &str = "No congested roads.";

/// Three labeled sections: the static map, the congestion snapshot and the
/// navigation task. Output depends only on the inputs.
pub fn build_prompt(
    graph: &RoadGraph,
    snapshot: &CongestionSnapshot,
    origin: NodeId,
    destination: NodeId,
) -> String {
    let mut out = String::new();
    out.push_str("## 1. Static Map Context\n");
    out.push_str("Undirected road network. Each line: node id, position (x, y) in meters, then neighbors with road length in meters.\n");
    for node in graph.nodes() {
        write!(out, "Node {} ({:.1}, {:.1}):", node.id, node.position.x, node.position.y).unwrap();
        let neighbors = graph.neighbors(node.id);
        for (i, &(nb, edge)) in neighbors.iter().enumerate() {
            let sep = if i == 0 { " " } else { ", " };
            write!(out, "{sep}{nb} ({:.1} m)", graph.edge(edge).length).unwrap();
        }
        out.push('\n');
    }

    out.push_str("\n## 2. Dynamic State\n");
    if snapshot.is_empty() {
        out.push_str(NO_CONGESTION_LINE);
        out.push('\n');
    } else {
        out.push_str("Congested roads as [node, node, congestion factor]; a factor of 1.0 means free flow and travel cost grows with the factor.\n");
        out.push_str(&snapshot_to_json(snapshot));
        out.push('\n');
    }

    out.push_str("\n## 3. Navigation Task\n");
    writeln!(out, "You are at node {origin}. Your destination is node {destination}.").unwrap();
    out.push_str(
        "Balance path length against the reported congestion. Consecutive nodes must be directly connected. \
Answer with only a JSON array of node ids from your current node to your destination, for example [2, 5, 8, 9].\n",
    );
    out
}
