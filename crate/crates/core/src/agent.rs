//! Per-agent state machine and movement.
//!
//! Each agent keeps its own clock and is advanced in continuous time up to
//! the end of the current tick, so node arrivals, request issue times and
//! resume times are exact rather than rounded to the tick grid.
//!
//! The path buffer always starts at the agent's anchor node (the node it is
//! driving toward, or the node it stands on) and ends at its destination.
//!
//! Planning agents evaluate their triggers once per approach:
//!
//! - a [`AgentKind::ConcurrentPlanner`] evaluates when it commits to an edge,
//!   and plans from that edge's far node while it keeps driving. If the
//!   answer arrives first it is spliced in and the agent never stops;
//!   otherwise it waits at the node until the answer (or a failure) lands.
//! - a [`AgentKind::SequentialPlanner`] evaluates on arrival, and halts in
//!   `Thinking` until its plan returns.
//!
//! Any failed, malformed or inapplicable plan is discarded and the agent
//! keeps its previous buffer, replanning with static A* only when that
//! buffer is unusable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::congestion::{AgentId, CongestionRegistry};
use crate::network::{astar_shortest_path, validate_path, EdgeKey, NodeId, PathVerdict, RoadGraph};
use crate::planner::{FailureReason, PlanOutcome, PlanResponse, RequestId};

/// Slack for comparing instants computed along different arithmetic paths.
const TIME_EPS: f64 = 1e-9;

pub const DEFAULT_SPEED: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentState {
    Moving,
    Thinking,
    Waiting,
    Arrived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "astar")]
    AStarStatic,
    #[serde(rename = "sequential")]
    SequentialPlanner,
    #[serde(rename = "concurrent")]
    ConcurrentPlanner,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [
        AgentKind::AStarStatic,
        AgentKind::SequentialPlanner,
        AgentKind::ConcurrentPlanner,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AgentKind::AStarStatic => "astar",
            AgentKind::SequentialPlanner => "sequential",
            AgentKind::ConcurrentPlanner => "concurrent",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        AgentKind::ALL.into_iter().find(|k| k.label() == s)
    }

    pub fn plans(&self) -> bool {
        !matches!(self, AgentKind::AStarStatic)
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerReason {
    Initialization,
    UpcomingComplexNode,
    CongestionAhead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    /// Nodes with at least this many roads are decision points.
    pub complex_degree: usize,
    /// Congestion factor on the projected path that forces a replan.
    pub congestion_threshold: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            complex_degree: 3,
            congestion_threshold: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    AtNode(NodeId),
    OnEdge {
        from: NodeId,
        to: NodeId,
        length: f64,
        progress: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pending {
    pub request_id: RequestId,
    pub origin: NodeId,
    pub issued_at: f64,
}

/// One planning request as seen by the agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub request_id: RequestId,
    pub node: NodeId,
    pub trigger: TriggerReason,
    pub issued_at: f64,
    /// When the agent reached `node` (equal to `issued_at` for sequential).
    pub arrived_at: Option<f64>,
    pub resolved_at: Option<f64>,
    /// Concurrent agents only: the answer landed no later than arrival.
    pub resolved_before_arrival: Option<bool>,
    pub applied: bool,
    /// Time spent stopped at `node` because of this request.
    pub wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JourneyStats {
    pub origin: NodeId,
    pub destination: NodeId,
    pub spawn_time: f64,
    pub arrival_time: Option<f64>,
    pub wait_time: f64,
    pub reroute_count: u32,
    pub route_taken: Vec<NodeId>,
    pub decisions: Vec<DecisionRecord>,
    pub discarded_plans: u32,
    pub fallback_replans: u32,
    pub stale_responses: u32,
}

impl JourneyStats {
    pub fn journey_time(&self) -> Option<f64> {
        self.arrival_time.map(|a| a - self.spawn_time)
    }

    pub fn trigger_count(&self) -> usize {
        self.decisions.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentEvent {
    EnterEdge { agent: AgentId, edge: EdgeKey, at: f64 },
    ExitEdge { agent: AgentId, edge: EdgeKey, at: f64 },
    StateChange { agent: AgentId, from: AgentState, to: AgentState, at: f64 },
    Arrived { agent: AgentId, at: f64 },
}

/// Why a delivered plan was not used.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscardReason {
    Failed(FailureReason),
    Invalid(PathVerdict),
    OriginMismatch { expected: NodeId, found: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApplyOutcome {
    Applied { rerouted: bool },
    Discarded { reason: DiscardReason, replanned: bool },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("agent {agent}: path buffer is corrupt ({verdict})")]
    CorruptBuffer { agent: AgentId, verdict: PathVerdict },
    #[error("agent {0} already has a pending request")]
    RequestAlreadyPending(AgentId),
    #[error("agent {agent}: response {request} matches no pending request")]
    StaleResponse { agent: AgentId, request: RequestId },
    #[error("agent {agent} cannot reach {destination} from {from}")]
    Stranded { agent: AgentId, from: NodeId, destination: NodeId },
    #[error("agent {0} has no node to plan from")]
    NoPlanningNode(AgentId),
}

/// Where agents send plan requests. The implementor attaches the current
/// congestion snapshot and returns the id it assigned.
pub trait PlanSink {
    fn submit(&mut self, agent: AgentId, origin: NodeId, destination: NodeId, issued_at: f64) -> RequestId;
    fn cancel(&mut self, request: RequestId);
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: AgentId,
    pub kind: AgentKind,
    pub speed: f64,
    pub location: Location,
    pub destination: NodeId,
    pub path_buffer: Vec<NodeId>,
    pub pending: Option<Pending>,
    pub state: AgentState,
    pub stats: JourneyStats,
    triggers: TriggerConfig,
    /// Simulated up to this instant.
    clock: f64,
    /// May not leave a node before this instant.
    release_at: f64,
    /// Node whose triggers were already evaluated for the current approach.
    evaluated: Option<NodeId>,
    fresh: bool,
    /// Decision index for the node the agent currently stands on.
    open_decision: Option<usize>,
}

impl Agent {
    /// Places a new agent at `origin` with a static route as its initial
    /// buffer. An agent spawned at its destination is immediately `Arrived`.
    #[allow(clippy::too_many_arguments)]
    pub fn spawn(
        id: AgentId,
        kind: AgentKind,
        speed: f64,
        origin: NodeId,
        destination: NodeId,
        time: f64,
        graph: &RoadGraph,
        triggers: TriggerConfig,
    ) -> Result<Agent, AgentError> {
        let path_buffer = astar_shortest_path(graph, origin, destination)
            .map_err(|_| AgentError::Stranded {
                agent: id,
                from: origin,
                destination,
            })?
            .into_nodes();
        let done = origin == destination;
        Ok(Agent {
            id,
            kind,
            speed,
            location: Location::AtNode(origin),
            destination,
            path_buffer,
            pending: None,
            state: if done { AgentState::Arrived } else { AgentState::Moving },
            stats: JourneyStats {
                origin,
                destination,
                spawn_time: time,
                arrival_time: done.then_some(time),
                wait_time: 0.0,
                reroute_count: 0,
                route_taken: vec![origin],
                decisions: Vec::new(),
                discarded_plans: 0,
                fallback_replans: 0,
                stale_responses: 0,
            },
            triggers,
            clock: time,
            release_at: time,
            evaluated: None,
            fresh: kind.plans() && !done,
            open_decision: None,
        })
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn is_arrived(&self) -> bool {
        self.state == AgentState::Arrived
    }

    /// The node the agent is driving toward, or standing on.
    pub fn anchor(&self) -> NodeId {
        match self.location {
            Location::AtNode(n) => n,
            Location::OnEdge { to, .. } => to,
        }
    }

    pub fn current_edge(&self) -> Option<EdgeKey> {
        match self.location {
            Location::OnEdge { from, to, .. } => Some(EdgeKey::new(from, to)),
            Location::AtNode(_) => None,
        }
    }

    /// Node a new request would plan from.
    fn planning_node(&self) -> Option<NodeId> {
        match (self.kind, self.location) {
            (AgentKind::AStarStatic, _) => None,
            (AgentKind::SequentialPlanner, Location::AtNode(n)) => Some(n),
            (AgentKind::SequentialPlanner, Location::OnEdge { .. }) => None,
            (AgentKind::ConcurrentPlanner, Location::OnEdge { to, .. }) => Some(to),
            // Standing still: plan from the far end of the edge about to be taken.
            (AgentKind::ConcurrentPlanner, Location::AtNode(n)) => {
                self.path_buffer.get(1).copied().or(Some(n))
            }
        }
    }

    /// Decision rule for one node: branching point first, then congestion on
    /// the projected route from that node.
    fn trigger_for(&self, node: NodeId, graph: &RoadGraph, registry: &CongestionRegistry) -> Option<TriggerReason> {
        if node == self.destination {
            return None;
        }
        if graph.neighbors(node).len() >= self.triggers.complex_degree {
            return Some(TriggerReason::UpcomingComplexNode);
        }
        let ahead = match self.path_buffer.iter().position(|&n| n == node) {
            Some(i) => &self.path_buffer[i..],
            None => &[][..],
        };
        let congested = ahead.windows(2).any(|w| {
            registry
                .congestion_factor(EdgeKey::new(w[0], w[1]))
                .map(|cf| cf >= self.triggers.congestion_threshold)
                .unwrap_or(false)
        });
        congested.then_some(TriggerReason::CongestionAhead)
    }

    /// Trigger that should fire now, if any. At most one evaluation happens
    /// per approach to a node; spawning counts as `Initialization`.
    pub fn evaluate_triggers(&self, graph: &RoadGraph, registry: &CongestionRegistry) -> Option<TriggerReason> {
        if !self.kind.plans() || self.is_arrived() || self.pending.is_some() {
            return None;
        }
        let node = self.planning_node()?;
        if self.fresh {
            return (node != self.destination).then_some(TriggerReason::Initialization);
        }
        // A concurrent agent standing still evaluates when it commits to its next edge.
        if self.kind == AgentKind::ConcurrentPlanner && matches!(self.location, Location::AtNode(_)) {
            return None;
        }
        if self.evaluated == Some(node) {
            return None;
        }
        self.trigger_for(node, graph, registry)
    }

    /// Sends a plan request. Concurrent agents plan from `upcoming` and keep
    /// moving; sequential agents plan from the node they stand on and halt.
    pub fn issue_precomputation(
        &mut self,
        trigger: TriggerReason,
        upcoming: NodeId,
        sink: &mut dyn PlanSink,
    ) -> Result<RequestId, AgentError> {
        if self.pending.is_some() {
            return Err(AgentError::RequestAlreadyPending(self.id));
        }
        let origin = match (self.kind, self.location) {
            (AgentKind::ConcurrentPlanner, _) => upcoming,
            (AgentKind::SequentialPlanner, Location::AtNode(n)) => n,
            _ => return Err(AgentError::NoPlanningNode(self.id)),
        };
        let request_id = sink.submit(self.id, origin, self.destination, self.clock);
        self.pending = Some(Pending {
            request_id,
            origin,
            issued_at: self.clock,
        });
        self.evaluated = Some(origin);
        self.fresh = false;
        let at_origin = self.location == Location::AtNode(origin);
        self.stats.decisions.push(DecisionRecord {
            request_id,
            node: origin,
            trigger,
            issued_at: self.clock,
            arrived_at: at_origin.then_some(self.clock),
            resolved_at: None,
            resolved_before_arrival: None,
            applied: false,
            wait: 0.0,
        });
        if at_origin {
            self.open_decision = Some(self.stats.decisions.len() - 1);
        }
        if self.kind == AgentKind::SequentialPlanner {
            self.set_state(AgentState::Thinking, &mut Vec::new());
        }
        Ok(request_id)
    }

    /// Evaluates triggers and issues a request if one fires.
    pub fn poll_triggers(
        &mut self,
        graph: &RoadGraph,
        registry: &CongestionRegistry,
        sink: &mut dyn PlanSink,
    ) -> Result<Option<RequestId>, AgentError> {
        let fired = self.evaluate_triggers(graph, registry);
        self.fresh = false;
        match (fired, self.planning_node()) {
            (Some(reason), Some(node)) => self.issue_precomputation(reason, node, sink).map(Some),
            _ => Ok(None),
        }
    }

    /// Consumes a delivered response.
    pub fn apply_plan(&mut self, response: &PlanResponse, graph: &RoadGraph) -> Result<ApplyOutcome, AgentError> {
        let pending = match self.pending {
            Some(p) if p.request_id == response.request_id && !self.is_arrived() => p,
            _ => {
                self.stats.stale_responses += 1;
                return Err(AgentError::StaleResponse {
                    agent: self.id,
                    request: response.request_id,
                });
            }
        };
        self.pending = None;
        let anchor = self.anchor();

        let record_idx = self
            .stats
            .decisions
            .iter()
            .rposition(|d| d.request_id == pending.request_id);
        let before_arrival = match self.location {
            Location::OnEdge { to, length, progress, .. } if to == pending.origin => {
                let arrival = self.clock + (length - progress) / self.speed;
                Some(response.completed_at <= arrival + TIME_EPS)
            }
            _ => Some(false),
        };
        if let Some(i) = record_idx {
            let d = &mut self.stats.decisions[i];
            d.resolved_at = Some(response.completed_at);
            if self.kind == AgentKind::ConcurrentPlanner {
                d.resolved_before_arrival = before_arrival;
            }
        }

        let outcome = match &response.outcome {
            PlanOutcome::Failure(reason) => Err(DiscardReason::Failed(reason.clone())),
            PlanOutcome::Success(_) if pending.origin != anchor => Err(DiscardReason::OriginMismatch {
                expected: anchor,
                found: pending.origin,
            }),
            PlanOutcome::Success(path) => match validate_path(graph, path.nodes(), anchor, self.destination) {
                PathVerdict::Ok => Ok(path.nodes().to_vec()),
                verdict => Err(DiscardReason::Invalid(verdict)),
            },
        };

        let result = match outcome {
            Ok(plan) => {
                let rerouted = plan.get(1) != self.path_buffer.get(1);
                if rerouted {
                    self.stats.reroute_count += 1;
                }
                self.path_buffer = plan;
                if let Some(i) = record_idx {
                    self.stats.decisions[i].applied = true;
                }
                ApplyOutcome::Applied { rerouted }
            }
            Err(reason) => {
                self.stats.discarded_plans += 1;
                log::debug!("agent {} discarded plan {}: {:?}", self.id, response.request_id, reason);
                let replanned = !validate_path(graph, &self.path_buffer, anchor, self.destination).is_ok();
                if replanned {
                    self.replan_static(graph)?;
                }
                ApplyOutcome::Discarded { reason, replanned }
            }
        };

        self.release_at = self.release_at.max(response.completed_at);
        if matches!(self.state, AgentState::Waiting | AgentState::Thinking) {
            self.set_state(AgentState::Moving, &mut Vec::new());
        }
        Ok(result)
    }

    fn replan_static(&mut self, graph: &RoadGraph) -> Result<(), AgentError> {
        let from = self.anchor();
        let path = astar_shortest_path(graph, from, self.destination).map_err(|_| AgentError::Stranded {
            agent: self.id,
            from,
            destination: self.destination,
        })?;
        log::info!("agent {} fell back to a static route from {}", self.id, from);
        self.path_buffer = path.into_nodes();
        self.stats.fallback_replans += 1;
        Ok(())
    }

    fn set_state(&mut self, to: AgentState, events: &mut Vec<AgentEvent>) {
        if self.state != to {
            events.push(AgentEvent::StateChange {
                agent: self.id,
                from: self.state,
                to,
                at: self.clock,
            });
            self.state = to;
        }
    }

    fn accrue_wait(&mut self, dt: f64) {
        self.stats.wait_time += dt;
        if let Some(i) = self.open_decision {
            self.stats.decisions[i].wait += dt;
        }
    }

    /// Advances the agent to `until`. Edge transitions are reported in
    /// `events` in the order they happen.
    pub fn step(
        &mut self,
        until: f64,
        graph: &RoadGraph,
        registry: &CongestionRegistry,
        sink: &mut dyn PlanSink,
        events: &mut Vec<AgentEvent>,
    ) -> Result<(), AgentError> {
        while self.clock < until - TIME_EPS {
            match self.state {
                AgentState::Arrived => break,
                AgentState::Waiting | AgentState::Thinking => {
                    self.accrue_wait(until - self.clock);
                    self.clock = until;
                }
                AgentState::Moving => match self.location {
                    Location::AtNode(node) => {
                        if self.release_at > self.clock + TIME_EPS {
                            let resume = self.release_at.min(until);
                            self.accrue_wait(resume - self.clock);
                            self.clock = resume;
                            continue;
                        }
                        self.depart(node, graph, registry, sink, events)?;
                    }
                    Location::OnEdge {
                        from,
                        to,
                        length,
                        progress,
                    } => {
                        let needed = (length - progress) / self.speed;
                        if self.clock + needed <= until + TIME_EPS {
                            self.clock += needed;
                            self.location = Location::AtNode(to);
                            events.push(AgentEvent::ExitEdge {
                                agent: self.id,
                                edge: EdgeKey::new(from, to),
                                at: self.clock,
                            });
                            self.handle_arrival(to, graph, registry, sink, events)?;
                        } else {
                            self.location = Location::OnEdge {
                                from,
                                to,
                                length,
                                progress: (progress + self.speed * (until - self.clock)).min(length),
                            };
                            self.clock = until;
                        }
                    }
                },
            }
        }
        self.clock = self.clock.max(until);
        Ok(())
    }

    fn depart(
        &mut self,
        node: NodeId,
        graph: &RoadGraph,
        registry: &CongestionRegistry,
        sink: &mut dyn PlanSink,
        events: &mut Vec<AgentEvent>,
    ) -> Result<(), AgentError> {
        if self.path_buffer.len() < 2 || self.path_buffer[0] != node {
            log::warn!("agent {} has no usable route at node {}", self.id, node);
            self.replan_static(graph)?;
        }
        match validate_path(graph, &self.path_buffer, node, self.destination) {
            PathVerdict::Ok => {}
            verdict => return Err(AgentError::CorruptBuffer { agent: self.id, verdict }),
        }
        self.close_decision();
        let next = self.path_buffer[1];
        let length = graph.edge_between(node, next).expect("validated hop").length;
        self.path_buffer.remove(0);
        self.location = Location::OnEdge {
            from: node,
            to: next,
            length,
            progress: 0.0,
        };
        events.push(AgentEvent::EnterEdge {
            agent: self.id,
            edge: EdgeKey::new(node, next),
            at: self.clock,
        });
        if self.kind == AgentKind::ConcurrentPlanner && self.evaluated != Some(next) && self.pending.is_none() {
            let fired = self.trigger_for(next, graph, registry);
            self.evaluated = Some(next);
            if let Some(reason) = fired {
                self.issue_precomputation(reason, next, sink)?;
            }
        }
        Ok(())
    }

    fn close_decision(&mut self) {
        self.open_decision = None;
    }

    fn handle_arrival(
        &mut self,
        node: NodeId,
        graph: &RoadGraph,
        registry: &CongestionRegistry,
        sink: &mut dyn PlanSink,
        events: &mut Vec<AgentEvent>,
    ) -> Result<(), AgentError> {
        self.stats.route_taken.push(node);
        self.open_decision = self
            .stats
            .decisions
            .iter()
            .rposition(|d| d.node == node && d.arrived_at.is_none());
        if let Some(i) = self.open_decision {
            self.stats.decisions[i].arrived_at = Some(self.clock);
        }

        if node == self.destination {
            if let Some(p) = self.pending.take() {
                sink.cancel(p.request_id);
            }
            self.path_buffer = vec![node];
            self.stats.arrival_time = Some(self.clock);
            self.open_decision = None;
            self.set_state(AgentState::Arrived, events);
            events.push(AgentEvent::Arrived {
                agent: self.id,
                at: self.clock,
            });
            return Ok(());
        }

        match self.pending {
            Some(p) if p.origin == node => {
                self.set_state(AgentState::Waiting, events);
                return Ok(());
            }
            Some(p) => {
                // Passed the node the request was planning from.
                sink.cancel(p.request_id);
                self.pending = None;
            }
            None => {}
        }

        if self.kind == AgentKind::SequentialPlanner {
            let fired = self.trigger_for(node, graph, registry);
            self.evaluated = Some(node);
            if let Some(reason) = fired {
                self.issue_precomputation(reason, node, sink)?;
                events.push(AgentEvent::StateChange {
                    agent: self.id,
                    from: AgentState::Moving,
                    to: AgentState::Thinking,
                    at: self.clock,
                });
            }
        }
        Ok(())
    }
}

/// Applies every delivered response, then advances the agent by `dt`.
pub fn step_agent(
    agent: &mut Agent,
    dt: f64,
    graph: &RoadGraph,
    registry: &CongestionRegistry,
    inbox: &[PlanResponse],
    sink: &mut dyn PlanSink,
) -> Result<(Vec<ApplyOutcome>, Vec<AgentEvent>), AgentError> {
    let mut applied = Vec::with_capacity(inbox.len());
    for response in inbox {
        match agent.apply_plan(response, graph) {
            Ok(outcome) => applied.push(outcome),
            Err(AgentError::StaleResponse { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let mut events = Vec::new();
    let until = agent.clock() + dt;
    agent.step(until, graph, registry, sink, &mut events)?;
    Ok((applied, events))
}
