//! Cognitive backends and the request/response contract they share.
//!
//! Three families of backend exist:
//!
//! - the deterministic oracles ([`OracleBackend`]) which run static A* or a
//!   congestion-aware Dijkstra and report a latency drawn from a
//!   [`LatencyModel`], so planner delay becomes a scheduled simulation event;
//! - text backends ([`TextBackend`]) whose replies go through the same
//!   parsing path as a language model's;
//! - the live HTTP backend ([`llm::LlmBackend`]), which only makes sense on
//!   the wall clock.

mod latency;
pub mod llm;
mod parse;
mod prompt;
mod routing;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::congestion::{AgentId, CongestionSnapshot};
use crate::network::{NodeId, Path, RoadGraph};

pub use latency::{sample_latency, LatencyModel};
pub use parse::{parse_path_from_text, ParseError};
pub use prompt::{build_prompt, NO_CONGESTION_LINE, SYSTEM_PROMPT};
pub use routing::{plan_congestion_aware, plan_static, route_cost};

/// Unique token identifying one plan request within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub request_id: RequestId,
    pub agent_id: AgentId,
    pub origin: NodeId,
    pub destination: NodeId,
    pub snapshot: Arc<CongestionSnapshot>,
    pub issued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FailureReason {
    Timeout,
    QueueFull,
    Unreachable,
    Parse(ParseError),
    Backend(String),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Timeout => f.write_str("timed out"),
            FailureReason::QueueFull => f.write_str("request queue full"),
            FailureReason::Unreachable => f.write_str("destination unreachable"),
            FailureReason::Parse(e) => write!(f, "unparseable reply: {e}"),
            FailureReason::Backend(e) => write!(f, "backend error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Success(Path),
    Failure(FailureReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResponse {
    pub request_id: RequestId,
    pub agent_id: AgentId,
    pub outcome: PlanOutcome,
    /// Seconds between issuing and completion.
    pub latency: f64,
    /// Simulation time at which the response became available.
    pub completed_at: f64,
}

/// A virtual-time backend result: what it answered and how long it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduled {
    pub outcome: PlanOutcome,
    pub latency: f64,
}

/// Backend whose latency is simulated. `None` means it never answers.
pub trait VirtualPlanner: Send {
    fn plan(&mut self, request: &PlanRequest, draw: u64) -> Option<Scheduled>;
}

/// Backend that does real work and may block; run off the simulation loop.
pub trait BlockingPlanner: Send + Sync {
    fn plan(&self, request: &PlanRequest) -> PlanOutcome;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStrategy {
    /// Shortest distance, ignores congestion.
    Static,
    /// Minimizes the sum of length times congestion factor.
    CongestionAware,
}

/// Deterministic stand-in for a reasoning model.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    graph: Arc<RoadGraph>,
    strategy: OracleStrategy,
    latency: LatencyModel,
    seed: u64,
}

impl OracleBackend {
    pub fn new(graph: Arc<RoadGraph>, strategy: OracleStrategy, latency: LatencyModel, seed: u64) -> Self {
        OracleBackend {
            graph,
            strategy,
            latency,
            seed,
        }
    }
}

impl VirtualPlanner for OracleBackend {
    fn plan(&mut self, request: &PlanRequest, draw: u64) -> Option<Scheduled> {
        let routed = match self.strategy {
            OracleStrategy::Static => plan_static(&self.graph, request.origin, request.destination),
            OracleStrategy::CongestionAware => plan_congestion_aware(
                &self.graph,
                &request.snapshot,
                request.origin,
                request.destination,
            ),
        };
        let outcome = match routed {
            Ok(path) => PlanOutcome::Success(path),
            Err(_) => PlanOutcome::Failure(FailureReason::Unreachable),
        };
        Some(Scheduled {
            outcome,
            latency: self.latency.sample(self.seed, draw),
        })
    }
}

/// Adversarial backend that accepts requests and never answers.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverBackend;

impl VirtualPlanner for NeverBackend {
    fn plan(&mut self, _request: &PlanRequest, _draw: u64) -> Option<Scheduled> {
        None
    }
}

/// Virtual backend that produces raw text, parsed exactly like a model reply.
pub struct TextBackend<F> {
    reply: F,
}

impl<F> TextBackend<F>
where
    F: FnMut(&PlanRequest, u64) -> (String, f64) + Send,
{
    pub fn new(reply: F) -> Self {
        TextBackend { reply }
    }
}

impl<F> VirtualPlanner for TextBackend<F>
where
    F: FnMut(&PlanRequest, u64) -> (String, f64) + Send,
{
    fn plan(&mut self, request: &PlanRequest, draw: u64) -> Option<Scheduled> {
        let (text, latency) = (self.reply)(request, draw);
        Some(Scheduled {
            outcome: outcome_from_text(&text),
            latency: latency.max(0.0),
        })
    }
}

/// Structural parse of a reply into an outcome. Graph checks happen when the
/// agent applies the plan.
pub fn outcome_from_text(text: &str) -> PlanOutcome {
    match parse_path_from_text(text) {
        Ok(path) => PlanOutcome::Success(path),
        Err(e) => PlanOutcome::Failure(FailureReason::Parse(e)),
    }
}
