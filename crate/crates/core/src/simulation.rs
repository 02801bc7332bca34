//! Fixed-timestep engine.
//!
//! Tick `k` covers the interval `((k-1)·dt, k·dt]` and runs six phases in
//! order: advance the clock, spawn due agents, drain planner completions
//! into per-agent inboxes, update each agent in id order (apply inbox,
//! evaluate triggers, move), apply edge transitions to the congestion
//! registry, and record metrics. Agents read congestion as it stood at the
//! start of the tick.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{Agent, AgentError, AgentEvent, AgentKind, AgentState, PlanSink, TriggerConfig};
use crate::congestion::{
    AgentId, CongestionError, CongestionRegistry, CongestionSnapshot, DEFAULT_FOOTPRINT, DEFAULT_REPORT_THRESHOLD,
};
use crate::network::{default_map, MapFile, NetworkError, NodeId, RoadGraph};
use crate::planner::llm::{LlmBackend, LlmConfig};
use crate::planner::{LatencyModel, NeverBackend, OracleBackend, OracleStrategy, PlanRequest, RequestId};
use crate::request_manager::{Backend, ManagerConfig, ManagerStats, RequestManager};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Virtual,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Congestion-aware Dijkstra with sampled latency.
    Oracle,
    /// Static A* with sampled latency.
    Static,
    /// Never answers; every request times out.
    Never,
    /// Live chat-completions endpoint. Requires the wall clock.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// `default` for the built-in grid, otherwise a path to a JSON map.
    pub map: String,
    pub agents: usize,
    /// Kind used for every agent unless `mix` is set.
    pub arm: AgentKind,
    /// Kinds assigned round-robin by agent id.
    pub mix: Vec<AgentKind>,
    pub spawn_window: f64,
    pub seed: u64,
    pub dt: f64,
    pub speed: f64,
    pub backend: BackendKind,
    pub latency: LatencyModel,
    pub footprint: f64,
    pub report_threshold: f64,
    pub congestion_threshold: f64,
    pub complex_degree: usize,
    pub timeout: f64,
    pub max_in_flight: usize,
    pub queue_capacity: usize,
    pub max_sim_time: f64,
    pub repetitions: u32,
    pub clock: ClockMode,
    pub llm: LlmConfig,
    pub congestion_trace: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let manager = ManagerConfig::default();
        let triggers = TriggerConfig::default();
        ScenarioConfig {
            name: "scenario".to_string(),
            map: "default".to_string(),
            agents: 10,
            arm: AgentKind::ConcurrentPlanner,
            mix: Vec::new(),
            spawn_window: 10.0,
            seed: 42,
            dt: 0.1,
            speed: crate::agent::DEFAULT_SPEED,
            backend: BackendKind::Oracle,
            latency: LatencyModel::default(),
            footprint: DEFAULT_FOOTPRINT,
            report_threshold: DEFAULT_REPORT_THRESHOLD,
            congestion_threshold: triggers.congestion_threshold,
            complex_degree: triggers.complex_degree,
            timeout: manager.timeout,
            max_in_flight: manager.max_in_flight,
            queue_capacity: manager.queue_capacity,
            max_sim_time: 3600.0,
            repetitions: 1,
            clock: ClockMode::Virtual,
            llm: LlmConfig::default(),
            congestion_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_fields(errors: &[FieldError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {}", join_fields(.0))]
    InvalidConfig(Vec<FieldError>),
    #[error("cannot read map {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad map: {0}")]
    Map(#[from] NetworkError),
    #[error("congestion invariant violated: {0}")]
    Congestion(#[from] CongestionError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("simulation already finished")]
    Finished,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, field: &'static str, message: &str| {
            if !ok {
                errors.push(FieldError {
                    field,
                    message: message.to_string(),
                });
            }
        };
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        check(self.agents >= 1, "agents", "must be at least 1");
        check(finite_pos(self.dt), "dt", "must be a positive number");
        check(finite_pos(self.speed), "speed", "must be a positive number");
        check(
            self.spawn_window.is_finite() && self.spawn_window >= 0.0,
            "spawn_window",
            "must be a non-negative number",
        );
        check(finite_pos(self.max_sim_time), "max_sim_time", "must be a positive finite number");
        check(self.repetitions >= 1, "repetitions", "must be at least 1");
        check(finite_pos(self.footprint), "footprint", "must be a positive number");
        check(
            self.report_threshold.is_finite() && self.report_threshold >= 1.0,
            "report_threshold",
            "must be at least 1.0",
        );
        check(
            self.congestion_threshold.is_finite() && self.congestion_threshold >= 1.0,
            "congestion_threshold",
            "must be at least 1.0",
        );
        check(self.complex_degree >= 1, "complex_degree", "must be at least 1");
        check(finite_pos(self.timeout), "timeout", "must be a positive number");
        check(self.max_in_flight >= 1, "max_in_flight", "must be at least 1");
        check(self.queue_capacity >= 1, "queue_capacity", "must be at least 1");
        if let Err(msg) = self.latency.check() {
            check(false, "latency", &msg);
        }
        check(
            !(self.backend == BackendKind::Llm && self.clock == ClockMode::Virtual),
            "clock",
            "the llm backend needs the wall clock (clock: wall)",
        );
        check(!self.name.is_empty(), "name", "must not be empty");
        if errors.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(errors))
        }
    }

    /// Config for repetition `k`: same scenario, seed offset by `k`.
    pub fn for_run(&self, k: u32) -> ScenarioConfig {
        ScenarioConfig {
            seed: self.seed.wrapping_add(u64::from(k)),
            ..self.clone()
        }
    }

    pub fn arm_label(&self) -> String {
        if self.mix.is_empty() {
            self.arm.label().to_string()
        } else {
            "mixed".to_string()
        }
    }

    pub fn kind_of(&self, agent: usize) -> AgentKind {
        if self.mix.is_empty() {
            self.arm
        } else {
            self.mix[agent % self.mix.len()]
        }
    }

    pub fn manager_config(&self) -> ManagerConfig {
        ManagerConfig {
            max_in_flight: self.max_in_flight,
            queue_capacity: self.queue_capacity,
            timeout: self.timeout,
        }
    }

    pub fn trigger_config(&self) -> TriggerConfig {
        TriggerConfig {
            complex_degree: self.complex_degree,
            congestion_threshold: self.congestion_threshold,
        }
    }

    pub fn load_graph(&self) -> Result<RoadGraph, SimError> {
        if self.map == "default" {
            return Ok(default_map());
        }
        let path = PathBuf::from(&self.map);
        let text = std::fs::read_to_string(&path).map_err(|source| SimError::Io { path, source })?;
        Ok(MapFile::parse(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpawnEvent {
    pub agent: AgentId,
    pub time: f64,
    pub origin: NodeId,
    pub destination: NodeId,
}

/// Spawn times uniform over `[0, window]`, endpoints uniform over ordered
/// pairs of distinct nodes. Depends only on `(seed, agents, window,
/// node_count)`, so arms with the same seed face the same demand.
pub fn spawn_schedule(seed: u64, agents: usize, window: f64, node_count: usize) -> Vec<SpawnEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..agents)
        .map(|i| {
            let time = if window > 0.0 { rng.random_range(0.0..=window) } else { 0.0 };
            let origin = rng.random_range(0..node_count);
            let (origin, destination) = if node_count > 1 {
                let d = rng.random_range(0..node_count - 1);
                (origin, if d >= origin { d + 1 } else { d })
            } else {
                (origin, origin)
            };
            SpawnEvent {
                agent: AgentId(i as u32),
                time,
                origin: NodeId(origin),
                destination: NodeId(destination),
            }
        })
        .collect()
}

pub fn schedule_hash(schedule: &[SpawnEvent]) -> String {
    let mut hasher = Sha256::new();
    for e in schedule {
        hasher.update(format!("{},{:016x},{},{}\n", e.agent, e.time.to_bits(), e.origin, e.destination));
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub mode: ClockMode,
    pub now: f64,
    pub tick: u64,
    pub dt: f64,
    started: Option<Instant>,
}

impl SimClock {
    pub fn new(mode: ClockMode, dt: f64) -> Self {
        SimClock {
            mode,
            now: 0.0,
            tick: 0,
            dt,
            started: None,
        }
    }

    /// Moves to the end of the next tick. The wall clock additionally
    /// sleeps so that simulated time never runs ahead of real time.
    pub fn advance(&mut self) {
        self.tick += 1;
        self.now = self.tick as f64 * self.dt;
        if self.mode == ClockMode::Wall {
            let started = *self.started.get_or_insert_with(Instant::now);
            let target = started + Duration::from_secs_f64(self.now);
            if let Some(wait) = target.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }

    pub fn tick_start(&self) -> f64 {
        (self.tick.saturating_sub(1)) as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub time: f64,
    pub u: NodeId,
    pub v: NodeId,
    pub occupancy: usize,
    pub cf: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub tick: u64,
    pub now: f64,
    pub spawned: usize,
    pub delivered: usize,
    pub edge_events: usize,
    pub arrived: usize,
}

/// Submits on behalf of agents, attaching the snapshot taken for this tick.
struct TickSink<'a> {
    manager: &'a mut RequestManager,
    snapshot: Arc<CongestionSnapshot>,
    next_request: &'a mut u64,
}

impl PlanSink for TickSink<'_> {
    fn submit(&mut self, agent: AgentId, origin: NodeId, destination: NodeId, issued_at: f64) -> RequestId {
        *self.next_request += 1;
        let request_id = RequestId(*self.next_request);
        self.manager.submit(PlanRequest {
            request_id,
            agent_id: agent,
            origin,
            destination,
            snapshot: Arc::clone(&self.snapshot),
            issued_at,
        });
        request_id
    }

    fn cancel(&mut self, request: RequestId) {
        if let Err(e) = self.manager.cancel(request) {
            log::debug!("cancel of {request} ignored: {e}");
        }
    }
}

pub struct SimulationState {
    config: ScenarioConfig,
    graph: Arc<RoadGraph>,
    registry: CongestionRegistry,
    manager: RequestManager,
    clock: SimClock,
    schedule: Vec<SpawnEvent>,
    spawned: Vec<bool>,
    agents: Vec<Option<Agent>>,
    next_request: u64,
    peak_congestion: f64,
    violations: Vec<String>,
    trace: Vec<TraceRow>,
}

/// Builds the graph, registry, manager and spawn schedule for `config`.
pub fn init_scenario(config: &ScenarioConfig) -> Result<SimulationState, SimError> {
    config.validate()?;
    let graph = Arc::new(config.load_graph()?);
    let backend = match config.backend {
        BackendKind::Oracle => Backend::virtual_time(OracleBackend::new(
            Arc::clone(&graph),
            OracleStrategy::CongestionAware,
            config.latency,
            config.seed,
        )),
        BackendKind::Static => Backend::virtual_time(OracleBackend::new(
            Arc::clone(&graph),
            OracleStrategy::Static,
            config.latency,
            config.seed,
        )),
        BackendKind::Never => Backend::virtual_time(NeverBackend),
        BackendKind::Llm => {
            let llm = LlmBackend::new(config.llm.clone(), Arc::clone(&graph)).map_err(|e| {
                SimError::InvalidConfig(vec![FieldError {
                    field: "llm",
                    message: e.to_string(),
                }])
            })?;
            Backend::threaded(Arc::new(llm))
        }
    };
    init_with_backend_on(config, graph, backend)
}

/// Like [`init_scenario`] but with a caller-supplied planner backend.
pub fn init_with_backend(config: &ScenarioConfig, backend: Backend) -> Result<SimulationState, SimError> {
    config.validate()?;
    let graph = Arc::new(config.load_graph()?);
    init_with_backend_on(config, graph, backend)
}

fn init_with_backend_on(
    config: &ScenarioConfig,
    graph: Arc<RoadGraph>,
    backend: Backend,
) -> Result<SimulationState, SimError> {
    if !backend.is_virtual() && config.clock == ClockMode::Virtual {
        return Err(SimError::InvalidConfig(vec![FieldError {
            field: "clock",
            message: "a threaded planner backend needs the wall clock".to_string(),
        }]));
    }
    if graph.node_count() < 2 {
        return Err(SimError::InvalidConfig(vec![FieldError {
            field: "map",
            message: "needs at least two nodes".to_string(),
        }]));
    }
    if !graph.is_connected() {
        return Err(SimError::InvalidConfig(vec![FieldError {
            field: "map",
            message: "road network is not connected".to_string(),
        }]));
    }
    let schedule = spawn_schedule(config.seed, config.agents, config.spawn_window, graph.node_count());
    log::info!(
        "scenario {} arm {} seed {}: schedule {}",
        config.name,
        config.arm_label(),
        config.seed,
        schedule_hash(&schedule)
    );
    Ok(SimulationState {
        registry: CongestionRegistry::with_footprint(&graph, config.footprint),
        manager: RequestManager::new(config.manager_config(), backend),
        clock: SimClock::new(config.clock, config.dt),
        spawned: vec![false; schedule.len()],
        agents: vec![None; schedule.len()],
        schedule,
        graph,
        config: config.clone(),
        next_request: 0,
        peak_congestion: 1.0,
        violations: Vec::new(),
        trace: Vec::new(),
    })
}

impl SimulationState {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn registry(&self) -> &CongestionRegistry {
        &self.registry
    }

    pub fn manager(&self) -> &RequestManager {
        &self.manager
    }

    pub fn now(&self) -> f64 {
        self.clock.now
    }

    pub fn schedule(&self) -> &[SpawnEvent] {
        &self.schedule
    }

    pub fn agents(&self) -> impl Iterator<Item = &Agent> {
        self.agents.iter().flatten()
    }

    pub fn agent(&self, id: AgentId) -> Option<&Agent> {
        self.agents.get(id.0 as usize).and_then(Option::as_ref)
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn all_arrived(&self) -> bool {
        self.spawned.iter().all(|&s| s) && self.agents().all(Agent::is_arrived)
    }

    pub fn is_finished(&self) -> bool {
        self.all_arrived() || self.clock.now >= self.config.max_sim_time - 1e-9
    }

    pub fn run_tick(&mut self) -> Result<TickReport, SimError> {
        if self.is_finished() {
            return Err(SimError::Finished);
        }
        // 1. clock
        self.clock.advance();
        let now = self.clock.now;
        let mut report = TickReport {
            tick: self.clock.tick,
            now,
            ..TickReport::default()
        };

        // 2. spawn
        let triggers = self.config.trigger_config();
        for (i, event) in self.schedule.iter().enumerate() {
            if self.spawned[i] || event.time > now + 1e-9 {
                continue;
            }
            self.spawned[i] = true;
            let agent = Agent::spawn(
                event.agent,
                self.config.kind_of(i),
                self.config.speed,
                event.origin,
                event.destination,
                event.time,
                &self.graph,
                triggers,
            )?;
            self.agents[i] = Some(agent);
            report.spawned += 1;
        }

        // 3. deliver completions
        let mut inboxes: BTreeMap<AgentId, Vec<_>> = BTreeMap::new();
        for response in self.manager.drain_completions(now) {
            report.delivered += 1;
            inboxes.entry(response.agent_id).or_default().push(response);
        }

        // 4. agents in id order
        let snapshot = Arc::new(self.registry.snapshot(self.clock.tick_start(), self.config.report_threshold));
        let mut sink = TickSink {
            manager: &mut self.manager,
            snapshot,
            next_request: &mut self.next_request,
        };
        let mut events = Vec::new();
        for agent in self.agents.iter_mut().flatten() {
            if let Some(inbox) = inboxes.remove(&agent.id) {
                for response in &inbox {
                    match agent.apply_plan(response, &self.graph) {
                        Ok(_) | Err(AgentError::StaleResponse { .. }) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            if agent.is_arrived() {
                continue;
            }
            agent.poll_triggers(&self.graph, &self.registry, &mut sink)?;
            agent.step(now, &self.graph, &self.registry, &mut sink, &mut events)?;
        }

        // 5. edge transitions
        for event in &events {
            match *event {
                AgentEvent::EnterEdge { agent, edge, at } => {
                    report.edge_events += 1;
                    self.registry.enter_edge(agent, edge, at)?;
                }
                AgentEvent::ExitEdge { agent, edge, at } => {
                    report.edge_events += 1;
                    self.registry.exit_edge(agent, edge, at)?;
                }
                AgentEvent::Arrived { .. } => report.arrived += 1,
                AgentEvent::StateChange { .. } => {}
            }
        }

        // 6. metrics
        self.peak_congestion = self.peak_congestion.max(self.registry.max_factor());
        self.check_conservation();
        if self.config.congestion_trace {
            for (edge, cf) in self.graph.edges().iter().zip(self.registry.factors()) {
                let occupancy = self.registry.occupancy(edge.key()).unwrap_or(0);
                if occupancy > 0 {
                    self.trace.push(TraceRow {
                        time: now,
                        u: edge.u,
                        v: edge.v,
                        occupancy,
                        cf,
                    });
                }
            }
        }
        Ok(report)
    }

    /// Registry occupancy matches agent positions, one edge per agent.
    fn check_conservation(&mut self) {
        let on_edges = self.agents().filter(|a| a.current_edge().is_some()).count();
        let total = self.registry.total_occupancy();
        if on_edges != total {
            self.violations.push(format!(
                "t={:.3}: {on_edges} agents on edges but registry holds {total}",
                self.clock.now
            ));
        }
        let mut mismatches = Vec::new();
        for agent in self.agents() {
            if agent.current_edge() != self.registry.edge_of(agent.id) {
                mismatches.push(format!(
                    "t={:.3}: agent {} is on {:?} but registered on {:?}",
                    self.clock.now,
                    agent.id,
                    agent.current_edge(),
                    self.registry.edge_of(agent.id)
                ));
            }
        }
        self.violations.extend(mismatches);
    }

    /// Runs until every agent has arrived or `max_sim_time` is reached.
    pub fn run_to_completion(mut self) -> Result<RunMetrics, SimError> {
        while !self.is_finished() {
            self.run_tick()?;
        }
        Ok(self.metrics())
    }

    pub fn metrics(&self) -> RunMetrics {
        let journeys: Vec<JourneyRecord> = self
            .agents
            .iter()
            .zip(&self.schedule)
            .map(|(slot, event)| match slot {
                Some(a) => JourneyRecord {
                    agent_id: a.id,
                    kind: a.kind,
                    state: a.state,
                    stats: a.stats.clone(),
                },
                None => JourneyRecord::unspawned(event, self.config.kind_of(event.agent.0 as usize)),
            })
            .collect();
        RunMetrics::from_journeys(
            &self.config,
            schedule_hash(&self.schedule),
            journeys,
            self.peak_congestion,
            self.clock.now,
            self.clock.tick,
            self.manager.stats(),
            self.manager.unresolved(),
            self.violations.len(),
            self.trace.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JourneyRecord {
    pub agent_id: AgentId,
    pub kind: AgentKind,
    pub state: AgentState,
    pub stats: crate::agent::JourneyStats,
}

impl JourneyRecord {
    fn unspawned(event: &SpawnEvent, kind: AgentKind) -> Self {
        JourneyRecord {
            agent_id: event.agent,
            kind,
            state: AgentState::Moving,
            stats: crate::agent::JourneyStats {
                origin: event.origin,
                destination: event.destination,
                spawn_time: event.time,
                arrival_time: None,
                wait_time: 0.0,
                reroute_count: 0,
                route_taken: Vec::new(),
                decisions: Vec::new(),
                discarded_plans: 0,
                fallback_replans: 0,
                stale_responses: 0,
            },
        }
    }

    pub fn arrived(&self) -> bool {
        self.stats.arrival_time.is_some()
    }

    /// Spawned at its own destination; excluded from averages.
    pub fn degenerate(&self) -> bool {
        self.stats.origin == self.stats.destination
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub arm: String,
    pub seed: u64,
    pub schedule_hash: String,
    pub agents: usize,
    pub arrived: usize,
    pub failed: usize,
    pub avg_journey_time: f64,
    pub avg_wait_time: f64,
    pub max_congestion: f64,
    pub avg_reroute_count: f64,
    /// `None` when no concurrent request reached a verdict.
    pub pre_arrival_rate: Option<f64>,
    pub plan_requests: usize,
    pub discarded_plans: u64,
    pub fallback_replans: u64,
    pub stale_responses: u64,
    pub end_time: f64,
    pub ticks: u64,
    pub unresolved_requests: usize,
    pub invariant_violations: usize,
    pub manager: ManagerStats,
    #[serde(skip)]
    pub journeys: Vec<JourneyRecord>,
    #[serde(skip)]
    pub congestion_trace: Vec<TraceRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl RunMetrics {
    #[allow(clippy::too_many_arguments)]
    fn from_journeys(
        config: &ScenarioConfig,
        schedule_hash: String,
        journeys: Vec<JourneyRecord>,
        max_congestion: f64,
        end_time: f64,
        ticks: u64,
        manager: ManagerStats,
        unresolved_requests: usize,
        invariant_violations: usize,
        congestion_trace: Vec<TraceRow>,
    ) -> RunMetrics {
        let counted: Vec<&JourneyRecord> = journeys.iter().filter(|j| j.arrived() && !j.degenerate()).collect();
        let verdicts: Vec<bool> = journeys
            .iter()
            .filter(|j| j.kind == AgentKind::ConcurrentPlanner)
            .flat_map(|j| j.stats.decisions.iter().filter_map(|d| d.resolved_before_arrival))
            .collect();
        let pre_arrival_rate =
            (!verdicts.is_empty()).then(|| verdicts.iter().filter(|&&h| h).count() as f64 / verdicts.len() as f64);
        let sum_u32 = |f: fn(&JourneyRecord) -> u32| journeys.iter().map(|j| u64::from(f(j))).sum::<u64>();
        RunMetrics {
            scenario: config.name.clone(),
            arm: config.arm_label(),
            seed: config.seed,
            schedule_hash,
            agents: journeys.len(),
            arrived: journeys.iter().filter(|j| j.arrived()).count(),
            failed: journeys.iter().filter(|j| !j.arrived()).count(),
            avg_journey_time: mean(counted.iter().filter_map(|j| j.stats.journey_time())),
            avg_wait_time: mean(counted.iter().map(|j| j.stats.wait_time)),
            max_congestion,
            avg_reroute_count: mean(counted.iter().map(|j| f64::from(j.stats.reroute_count))),
            pre_arrival_rate,
            plan_requests: journeys.iter().map(|j| j.stats.decisions.len()).sum(),
            discarded_plans: sum_u32(|j| j.stats.discarded_plans),
            fallback_replans: sum_u32(|j| j.stats.fallback_replans),
            stale_responses: sum_u32(|j| j.stats.stale_responses),
            end_time,
            ticks,
            unresolved_requests,
            invariant_violations,
            manager,
            journeys,
            congestion_trace,
        }
    }

    pub fn journeys_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["agent_id", "kind", "spawn", "arrival", "journey_s", "wait_s", "reroutes", "route"])
            .expect("in-memory write");
        for j in &self.journeys {
            let route: Vec<String> = j.stats.route_taken.iter().map(|n| n.to_string()).collect();
            let opt = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_default();
            w.write_record([
                j.agent_id.to_string(),
                j.kind.label().to_string(),
                format!("{:.3}", j.stats.spawn_time),
                opt(j.stats.arrival_time),
                opt(j.stats.journey_time()),
                format!("{:.3}", j.stats.wait_time),
                j.stats.reroute_count.to_string(),
                route.join("-"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }

    pub fn congestion_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "u", "v", "occupancy", "cf"]).expect("in-memory write");
        for r in &self.congestion_trace {
            w.write_record([
                format!("{:.3}", r.time),
                r.u.to_string(),
                r.v.to_string(),
                r.occupancy.to_string(),
                format!("{:.3}", r.cf),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunMetrics, SimError> {
    init_scenario(config)?.run_to_completion()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for fewer than two values.
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len();
        if n == 0 {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        // Shifted by the first value so identical inputs give an exact mean.
        let base = values[0];
        let m = base + values.iter().map(|v| v - base).sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        MeanStd { mean: m, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub scenario: String,
    pub arm: String,
    pub runs: usize,
    pub avg_journey_time: MeanStd,
    pub avg_wait_time: MeanStd,
    pub max_congestion: MeanStd,
    pub avg_reroute_count: MeanStd,
    /// Over runs that produced a rate.
    pub pre_arrival_rate: Option<MeanStd>,
    pub failed_agents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub rows: Vec<ArmSummary>,
}

/// Groups runs by (scenario, arm) in order of first appearance.
pub fn summarize(runs: &[RunMetrics]) -> ComparisonSummary {
    let mut order: Vec<(String, String)> = Vec::new();
    for r in runs {
        let key = (r.scenario.clone(), r.arm.clone());
        if !order.contains(&key) {
            order.push(key);
        }
    }
    let rows = order
        .into_iter()
        .map(|(scenario, arm)| {
            let group: Vec<&RunMetrics> = runs.iter().filter(|r| r.scenario == scenario && r.arm == arm).collect();
            let col = |f: fn(&RunMetrics) -> f64| MeanStd::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let rates: Vec<f64> = group.iter().filter_map(|r| r.pre_arrival_rate).collect();
            ArmSummary {
                runs: group.len(),
                avg_journey_time: col(|r| r.avg_journey_time),
                avg_wait_time: col(|r| r.avg_wait_time),
                max_congestion: col(|r| r.max_congestion),
                avg_reroute_count: col(|r| r.avg_reroute_count),
                pre_arrival_rate: (!rates.is_empty()).then(|| MeanStd::of(&rates)),
                failed_agents: group.iter().map(|r| r.failed).sum(),
                scenario,
                arm,
            }
        })
        .collect();
    ComparisonSummary { rows }
}

impl ComparisonSummary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Plain-text table, one row per (scenario, arm).
    pub fn to_table(&self) -> String {
        let w = self.rows.iter().map(|r| r.scenario.len()).max().unwrap_or(0).max(8);
        let mut out = format!(
            "{:<w$} {:<11} {:>4} {:>16} {:>14} {:>13} {:>12} {:>10}\n",
            "scenario", "arm", "runs", "journey_s", "wait_s", "max_cf", "reroutes", "pre_arr"
        );
        let ms = |m: &MeanStd| format!("{:.2}±{:.2}", m.mean, m.std);
        for r in &self.rows {
            out.push_str(&format!(
                "{:<w$} {:<11} {:>4} {:>16} {:>14} {:>13} {:>12} {:>10}\n",
                r.scenario,
                r.arm,
                r.runs,
                ms(&r.avg_journey_time),
                ms(&r.avg_wait_time),
                ms(&r.max_congestion),
                ms(&r.avg_reroute_count),
                r.pre_arrival_rate.map(|m| format!("{:.3}", m.mean)).unwrap_or_else(|| "-".to_string()),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(agents: usize, arm: AgentKind) -> ScenarioConfig {
        ScenarioConfig {
            agents,
            arm,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn schedule_is_seeded() {
        let a = spawn_schedule(42, 40, 10.0, 12);
        assert_eq!(a, spawn_schedule(42, 40, 10.0, 12));
        assert_ne!(schedule_hash(&a), schedule_hash(&spawn_schedule(43, 40, 10.0, 12)));
        assert!(a.iter().all(|e| (0.0..=10.0).contains(&e.time) && e.origin != e.destination));
        assert!(spawn_schedule(1, 10, 0.0, 12).iter().all(|e| e.time == 0.0));
    }

    #[test]
    fn invalid_configs_name_fields() {
        let bad = ScenarioConfig {
            agents: 0,
            dt: 0.0,
            repetitions: 0,
            max_sim_time: f64::INFINITY,
            ..ScenarioConfig::default()
        };
        match bad.validate() {
            Err(SimError::InvalidConfig(errors)) => {
                let fields: Vec<_> = errors.iter().map(|e| e.field).collect();
                assert_eq!(fields, ["agents", "dt", "max_sim_time", "repetitions"]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let llm = ScenarioConfig {
            backend: BackendKind::Llm,
            ..ScenarioConfig::default()
        };
        assert!(matches!(llm.validate(), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn idle_tick_only_moves_the_clock() {
        let cfg = ScenarioConfig {
            agents: 1,
            spawn_window: 5.0,
            seed: 3,
            ..ScenarioConfig::default()
        };
        let mut sim = init_scenario(&cfg).unwrap();
        let first = sim.schedule()[0].time;
        assert!(first > 0.1, "seed chosen so nobody spawns in tick 1");
        let r = sim.run_tick().unwrap();
        assert_eq!(r.spawned + r.delivered + r.edge_events, 0);
        assert!((sim.now() - 0.1).abs() < 1e-12);
        assert_eq!(sim.agents().count(), 0);
    }

    #[test]
    fn single_static_agent_runs_free_flow() {
        let mut cfg = config(1, AgentKind::AStarStatic);
        cfg.spawn_window = 0.0;
        let metrics = run_scenario(&cfg).unwrap();
        let j = &metrics.journeys[0];
        let (o, d) = (j.stats.origin, j.stats.destination);
        let g = default_map();
        let (_, len) = crate::network::astar_shortest_path(&g, o, d)
            .map(|p| {
                let l = g.path_length(p.nodes()).unwrap();
                (p, l)
            })
            .unwrap();
        assert!((j.stats.journey_time().unwrap() - len / 10.0).abs() <= 0.1);
        assert_eq!(metrics.invariant_violations, 0);
    }

    #[test]
    fn summary_of_identical_runs_has_zero_spread() {
        let cfg = config(5, AgentKind::ConcurrentPlanner);
        let runs: Vec<_> = (0..3).map(|_| run_scenario(&cfg).unwrap()).collect();
        let s = summarize(&runs);
        assert_eq!(s.rows.len(), 1);
        let row = &s.rows[0];
        assert_eq!(row.runs, 3);
        for m in [row.avg_journey_time, row.avg_wait_time, row.max_congestion, row.avg_reroute_count] {
            assert_eq!(m.std, 0.0);
        }
        assert!(s.to_table().contains("concurrent"));
    }

    #[test]
    fn mixed_kinds_round_robin() {
        let cfg = ScenarioConfig {
            mix: vec![AgentKind::AStarStatic, AgentKind::ConcurrentPlanner],
            ..ScenarioConfig::default()
        };
        assert_eq!(cfg.kind_of(0), AgentKind::AStarStatic);
        assert_eq!(cfg.kind_of(3), AgentKind::ConcurrentPlanner);
        assert_eq!(cfg.arm_label(), "mixed");
    }

    #[test]
    fn csv_has_expected_header() {
        let m = run_scenario(&config(2, AgentKind::SequentialPlanner)).unwrap();
        let csv = m.journeys_csv();
        assert!(csv.starts_with("agent_id,kind,spawn,arrival,journey_s,wait_s,reroutes,route\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
