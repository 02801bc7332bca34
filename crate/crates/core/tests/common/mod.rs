//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use traffic_core::{CongestionSnapshot, NodeId, RoadGraph};

/// Every simple path from `start` to `goal`, by depth-first enumeration.
pub fn simple_paths(graph: &RoadGraph, start: NodeId, goal: NodeId) -> Vec<Vec<NodeId>> {
    fn walk(g: &RoadGraph, goal: NodeId, path: &mut Vec<NodeId>, seen: &mut Vec<bool>, out: &mut Vec<Vec<NodeId>>) {
        let here = *path.last().unwrap();
        if here == goal {
            out.push(path.clone());
            return;
        }
        for &(next, _) in g.neighbors(here) {
            if !seen[next.0] {
                seen[next.0] = true;
                path.push(next);
                walk(g, goal, path, seen, out);
                path.pop();
                seen[next.0] = false;
            }
        }
    }
    let mut seen = vec![false; graph.node_count()];
    seen[start.0] = true;
    let mut out = Vec::new();
    walk(graph, goal, &mut vec![start], &mut seen, &mut out);
    out
}

/// Hop lengths along `path`, read straight from the edge list.
pub fn hop_lengths(graph: &RoadGraph, path: &[NodeId]) -> Vec<f64> {
    path.windows(2)
        .map(|w| {
            graph
                .edges()
                .iter()
                .find(|e| (e.u == w[0] && e.v == w[1]) || (e.u == w[1] && e.v == w[0]))
                .expect("hop exists")
                .length
        })
        .collect()
}

pub fn weighted_cost(graph: &RoadGraph, snapshot: &CongestionSnapshot, path: &[NodeId]) -> f64 {
    let factor = |a: NodeId, b: NodeId| {
        snapshot
            .entries
            .iter()
            .find(|e| (e.u == a && e.v == b) || (e.u == b && e.v == a))
            .map(|e| e.cf.max(1.0))
            .unwrap_or(1.0)
    };
    path.windows(2)
        .zip(hop_lengths(graph, path))
        .map(|(w, len)| len * factor(w[0], w[1]))
        .sum()
}

pub fn is_walk(graph: &RoadGraph, path: &[NodeId], start: NodeId, goal: NodeId) -> bool {
    path.first() == Some(&start)
        && path.last() == Some(&goal)
        && path.windows(2).all(|w| graph.neighbors(w[0]).iter().any(|&(n, _)| n == w[1]))
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}
