//! Live per-edge occupancy and congestion factors, plus the shared snapshot
//! handed to planners.
//!
//! The congestion factor of an edge is `1 + occupants * footprint / length`:
//! a per-meter density measure that equals exactly `1.0` on an empty road.
//! Values are kept unrounded; rounding to one decimal happens only when a
//! snapshot is rendered to JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{EdgeKey, NodeId, RoadGraph};

/// Agent identifier, unique within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Meters of road one vehicle effectively claims.
pub const DEFAULT_FOOTPRINT: f64 = 100.0;
/// Edges at or above this factor are included in snapshots.
pub const DEFAULT_REPORT_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CongestionError {
    #[error("agent {agent} entered {edge} while still on {current}")]
    AlreadyOnEdge {
        agent: AgentId,
        edge: EdgeKey,
        current: EdgeKey,
    },
    #[error("agent {agent} is not on {edge}")]
    NotOnEdge { agent: AgentId, edge: EdgeKey },
    #[error("no road {0}")]
    UnknownEdge(EdgeKey),
}

/// Occupants of one edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeOccupancy {
    pub edge: EdgeKey,
    pub occupants: BTreeSet<AgentId>,
}

/// The road manager: tracks which agents are on which edge.
#[derive(Debug, Clone)]
pub struct CongestionRegistry {
    keys: Vec<EdgeKey>,
    lengths: Vec<f64>,
    slots: BTreeMap<EdgeKey, usize>,
    occupancy: Vec<BTreeSet<AgentId>>,
    agent_edge: BTreeMap<AgentId, usize>,
    footprint: f64,
    last_event: f64,
}

impl CongestionRegistry {
    pub fn new(graph: &RoadGraph) -> Self {
        Self::with_footprint(graph, DEFAULT_FOOTPRINT)
    }

    pub fn with_footprint(graph: &RoadGraph, footprint: f64) -> Self {
        let keys: Vec<EdgeKey> = graph.edges().iter().map(|e| e.key()).collect();
        CongestionRegistry {
            slots: keys.iter().enumerate().map(|(i, k)| (*k, i)).collect(),
            lengths: graph.edges().iter().map(|e| e.length).collect(),
            occupancy: vec![BTreeSet::new(); keys.len()],
            keys,
            agent_edge: BTreeMap::new(),
            footprint,
            last_event: 0.0,
        }
    }

    pub fn footprint(&self) -> f64 {
        self.footprint
    }

    fn slot(&self, edge: EdgeKey) -> Result<usize, CongestionError> {
        self.slots
            .get(&EdgeKey::new(edge.u, edge.v))
            .copied()
            .ok_or(CongestionError::UnknownEdge(edge))
    }

    pub fn enter_edge(&mut self, agent: AgentId, edge: EdgeKey, time: f64) -> Result<(), CongestionError> {
        let slot = self.slot(edge)?;
        if let Some(&current) = self.agent_edge.get(&agent) {
            return Err(CongestionError::AlreadyOnEdge {
                agent,
                edge: self.keys[slot],
                current: self.keys[current],
            });
        }
        self.occupancy[slot].insert(agent);
        self.agent_edge.insert(agent, slot);
        self.last_event = self.last_event.max(time);
        Ok(())
    }

    pub fn exit_edge(&mut self, agent: AgentId, edge: EdgeKey, time: f64) -> Result<(), CongestionError> {
        let slot = self.slot(edge)?;
        if self.agent_edge.get(&agent) != Some(&slot) {
            return Err(CongestionError::NotOnEdge {
                agent,
                edge: self.keys[slot],
            });
        }
        self.occupancy[slot].remove(&agent);
        self.agent_edge.remove(&agent);
        self.last_event = self.last_event.max(time);
        Ok(())
    }

    pub fn occupancy(&self, edge: EdgeKey) -> Result<usize, CongestionError> {
        Ok(self.occupancy[self.slot(edge)?].len())
    }

    pub fn edge_occupancy(&self, edge: EdgeKey) -> Result<EdgeOccupancy, CongestionError> {
        let slot = self.slot(edge)?;
        Ok(EdgeOccupancy {
            edge: self.keys[slot],
            occupants: self.occupancy[slot].clone(),
        })
    }

    /// Edge the agent currently occupies, if any.
    pub fn edge_of(&self, agent: AgentId) -> Option<EdgeKey> {
        self.agent_edge.get(&agent).map(|&slot| self.keys[slot])
    }

    /// Total number of agents on edges.
    pub fn total_occupancy(&self) -> usize {
        self.occupancy.iter().map(BTreeSet::len).sum()
    }

    pub fn congestion_factor(&self, edge: EdgeKey) -> Result<f64, CongestionError> {
        Ok(self.factor_at(self.slot(edge)?))
    }

    fn factor_at(&self, slot: usize) -> f64 {
        let n = self.occupancy[slot].len();
        if n == 0 {
            1.0
        } else {
            1.0 + n as f64 * self.footprint / self.lengths[slot]
        }
    }

    /// Factors of all edges, in graph edge order.
    pub fn factors(&self) -> Vec<f64> {
        (0..self.keys.len()).map(|s| self.factor_at(s)).collect()
    }

    pub fn max_factor(&self) -> f64 {
        (0..self.keys.len()).map(|s| self.factor_at(s)).fold(1.0, f64::max)
    }

    /// Edges with `CF >= report_threshold`, sorted by `(u, v)`.
    pub fn snapshot(&self, time: f64, report_threshold: f64) -> CongestionSnapshot {
        let entries = self
            .slots
            .iter()
            .filter_map(|(key, &slot)| {
                let cf = self.factor_at(slot);
                (cf >= report_threshold).then_some(SnapshotEntry {
                    u: key.u,
                    v: key.v,
                    cf,
                })
            })
            .collect();
        CongestionSnapshot { time, entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub u: NodeId,
    pub v: NodeId,
    pub cf: f64,
}

impl SnapshotEntry {
    pub fn key(&self) -> EdgeKey {
        EdgeKey::new(self.u, self.v)
    }
}

/// Shared perception at one instant: the congested edges and their factors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CongestionSnapshot {
    pub time: f64,
    pub entries: Vec<SnapshotEntry>,
}

impl CongestionSnapshot {
    pub fn empty(time: f64) -> Self {
        CongestionSnapshot {
            time,
            entries: Vec::new(),
        }
    }

    /// Builds a snapshot from arbitrary triples, canonicalizing and sorting.
    pub fn from_entries(time: f64, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut entries: Vec<SnapshotEntry> = entries
            .into_iter()
            .map(|(a, b, cf)| {
                let key = EdgeKey::new(NodeId(a), NodeId(b));
                SnapshotEntry { u: key.u, v: key.v, cf }
            })
            .collect();
        entries.sort_by_key(|e| (e.u, e.v));
        CongestionSnapshot { time, entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reported factor for an edge, `1.0` when absent.
    pub fn factor(&self, a: NodeId, b: NodeId) -> f64 {
        let key = EdgeKey::new(a, b);
        self.entries
            .binary_search_by(|e| (e.u, e.v).cmp(&(key.u, key.v)))
            .map(|i| self.entries[i].cf)
            .unwrap_or(1.0)
    }
}

/// Renders `[[u, v, cf], ...]` with one decimal on `cf`; `[]` when empty.
pub fn snapshot_to_json(snapshot: &CongestionSnapshot) -> String {
    let mut out = String::from("[");
    for (i, e) in snapshot.entries.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "[{}, {}, {:.1}]", e.u, e.v, e.cf).expect("writing to a String");
    }
    out.push(']');
    out
}

/// Parses the triple format produced by [`snapshot_to_json`].
pub fn snapshot_from_json(time: f64, text: &str) -> Result<CongestionSnapshot, serde_json::Error> {
    let triples: Vec<(usize, usize, f64)> = serde_json::from_str(text)?;
    Ok(CongestionSnapshot::from_entries(time, triples))
}
