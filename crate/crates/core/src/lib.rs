//! Multi-agent traffic simulation with route planning that overlaps travel.
//!
//! Agents drive a weighted road graph. Planning agents ask a slow planner
//! for routes and either stop to wait (sequential) or keep driving while the
//! answer is computed for the next decision node (concurrent).

pub mod agent;
pub mod congestion;
pub mod network;
pub mod planner;
pub mod request_manager;
pub mod simulation;

pub use agent::{Agent, AgentKind, AgentState, JourneyStats, Location, TriggerConfig, TriggerReason};
pub use congestion::{AgentId, CongestionRegistry, CongestionSnapshot, SnapshotEntry};
pub use network::{default_map, validate_path, EdgeKey, NodeId, Path, PathVerdict, RoadGraph};
pub use planner::{LatencyModel, PlanOutcome, PlanRequest, PlanResponse, RequestId};
pub use request_manager::{ManagerConfig, RequestManager};
pub use simulation::{init_scenario, run_scenario, summarize, ComparisonSummary, RunMetrics, ScenarioConfig, SimError};
