//! Non-blocking queue between agents and a planner backend.
//!
//! Submissions are FIFO and dispatched while fewer than `max_in_flight`
//! requests are outstanding. Every handle resolves exactly once: completed,
//! timed out, cancelled, or rejected because the queue was full. Failures
//! (timeouts and rejections) are delivered like any other response so the
//! agent's fallback logic sees a single path.
//!
//! With a virtual backend completions are scheduled events: a request issued
//! at `t` whose sampled latency is `L` is delivered by the first drain with
//! `now >= t + L` (or at dispatch, if it sat in the queue longer than `L`).
//! With a threaded backend the planner runs on its own thread and results
//! are staged in a channel until the next drain.

use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::congestion::AgentId;
use crate::planner::{BlockingPlanner, FailureReason, PlanOutcome, PlanRequest, PlanResponse, RequestId, VirtualPlanner};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_QUEUE_CAPACITY: usize = 256;
pub const DEFAULT_TIMEOUT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManagerConfig {
    pub max_in_flight: usize,
    pub queue_capacity: usize,
    /// Seconds after submission at which an unanswered request fails.
    pub timeout: f64,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestHandle {
    pub request_id: RequestId,
    pub agent_id: AgentId,
    pub submitted_at: f64,
    pub deadline: f64,
}

/// Gauges (`queued`, `in_flight`) and monotonic counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ManagerStats {
    pub queued: usize,
    pub in_flight: usize,
    pub submitted: u64,
    pub dispatched: u64,
    pub completed: u64,
    pub timed_out: u64,
    pub cancelled: u64,
    pub rejected: u64,
    pub stale_dropped: u64,
    pub redundant_cancels: u64,
    pub peak_queued: usize,
    pub peak_in_flight: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Completed,
    TimedOut,
    Cancelled,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManagerError {
    #[error("request {0} was already resolved")]
    AlreadyResolved(RequestId),
    #[error("request {0} was never submitted")]
    UnknownRequest(RequestId),
}

type Arrival = (RequestId, PlanOutcome);

pub enum Backend {
    Virtual(Box<dyn VirtualPlanner>),
    Threaded {
        planner: Arc<dyn BlockingPlanner>,
        tx: Sender<Arrival>,
        rx: Receiver<Arrival>,
    },
}

impl Backend {
    pub fn virtual_time(planner: impl VirtualPlanner + 'static) -> Self {
        Backend::Virtual(Box::new(planner))
    }

    pub fn threaded(planner: Arc<dyn BlockingPlanner>) -> Self {
        let (tx, rx) = mpsc::channel();
        Backend::Threaded { planner, tx, rx }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, Backend::Virtual(_))
    }
}

struct InFlight {
    handle: RequestHandle,
    issued_at: f64,
    /// Virtual backends only: when the answer lands and what it is.
    scheduled: Option<(f64, PlanOutcome)>,
}

pub struct RequestManager {
    config: ManagerConfig,
    backend: Backend,
    queue: VecDeque<(RequestHandle, PlanRequest)>,
    in_flight: BTreeMap<RequestId, InFlight>,
    resolved: BTreeMap<RequestId, Resolution>,
    staged: Vec<PlanResponse>,
    /// Virtual results that will land after their handle was resolved.
    zombies: Vec<f64>,
    draws: u64,
    stats: ManagerStats,
}

impl RequestManager {
    pub fn new(config: ManagerConfig, backend: Backend) -> Self {
        RequestManager {
            config,
            backend,
            queue: VecDeque::new(),
            in_flight: BTreeMap::new(),
            resolved: BTreeMap::new(),
            staged: Vec::new(),
            zombies: Vec::new(),
            draws: 0,
            stats: ManagerStats::default(),
        }
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.config
    }

    pub fn stats(&self) -> ManagerStats {
        ManagerStats {
            queued: self.queue.len(),
            in_flight: self.in_flight.len(),
            ..self.stats
        }
    }

    pub fn is_virtual(&self) -> bool {
        self.backend.is_virtual()
    }

    /// Handles not yet resolved, including rejections awaiting delivery.
    pub fn unresolved(&self) -> usize {
        self.queue.len() + self.in_flight.len()
    }

    pub fn resolution(&self, id: RequestId) -> Option<Resolution> {
        self.resolved.get(&id).copied()
    }

    /// Nothing queued, running or awaiting delivery.
    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty() && self.in_flight.is_empty() && self.staged.is_empty()
    }

    /// Enqueues a request and returns immediately. Dispatches at once when a
    /// slot is free; when the queue is full the handle resolves as a
    /// `QueueFull` failure delivered on the next drain.
    pub fn submit(&mut self, request: PlanRequest) -> RequestHandle {
        let handle = RequestHandle {
            request_id: request.request_id,
            agent_id: request.agent_id,
            submitted_at: request.issued_at,
            deadline: request.issued_at + self.config.timeout,
        };
        self.stats.submitted += 1;
        if self.queue.is_empty() && self.in_flight.len() < self.config.max_in_flight {
            let now = request.issued_at;
            self.dispatch(handle, request, now);
        } else if self.queue.len() < self.config.queue_capacity {
            self.queue.push_back((handle, request));
            self.stats.peak_queued = self.stats.peak_queued.max(self.queue.len());
        } else {
            self.resolve(handle.request_id, Resolution::Rejected);
            self.stats.rejected += 1;
            self.staged.push(PlanResponse {
                request_id: handle.request_id,
                agent_id: handle.agent_id,
                outcome: PlanOutcome::Failure(FailureReason::QueueFull),
                latency: 0.0,
                completed_at: handle.submitted_at,
            });
        }
        handle
    }

    fn dispatch(&mut self, handle: RequestHandle, request: PlanRequest, now: f64) {
        self.stats.dispatched += 1;
        let issued_at = request.issued_at;
        let scheduled = match &mut self.backend {
            Backend::Virtual(planner) => {
                let draw = self.draws;
                self.draws += 1;
                planner
                    .plan(&request, draw)
                    .map(|s| ((issued_at + s.latency).max(now), s.outcome))
            }
            Backend::Threaded { planner, tx, .. } => {
                let planner = Arc::clone(planner);
                let tx = tx.clone();
                thread::spawn(move || {
                    let outcome = planner.plan(&request);
                    // Receiver gone means the run ended; nothing to deliver.
                    let _ = tx.send((request.request_id, outcome));
                });
                None
            }
        };
        self.in_flight.insert(
            handle.request_id,
            InFlight {
                handle,
                issued_at,
                scheduled,
            },
        );
        self.stats.peak_in_flight = self.stats.peak_in_flight.max(self.in_flight.len());
    }

    fn resolve(&mut self, id: RequestId, how: Resolution) {
        let previous = self.resolved.insert(id, how);
        assert!(previous.is_none(), "request {id} resolved twice");
    }

    /// Collects every response available at `now`, expires overdue handles
    /// and refills free slots from the queue. Never waits on the backend.
    pub fn drain_completions(&mut self, now: f64) -> Vec<PlanResponse> {
        let mut out = std::mem::take(&mut self.staged);
        loop {
            let arrivals: Vec<Arrival> = match &self.backend {
                Backend::Threaded { rx, .. } => rx.try_iter().collect(),
                Backend::Virtual(_) => Vec::new(),
            };
            for (id, outcome) in arrivals {
                match self.in_flight.remove(&id) {
                    Some(f) => {
                        self.resolve(id, Resolution::Completed);
                        self.stats.completed += 1;
                        out.push(PlanResponse {
                            request_id: id,
                            agent_id: f.handle.agent_id,
                            outcome,
                            latency: (now - f.issued_at).max(0.0),
                            completed_at: now,
                        });
                    }
                    None => self.stats.stale_dropped += 1,
                }
            }

            let before = self.zombies.len();
            self.zombies.retain(|&at| at > now);
            self.stats.stale_dropped += (before - self.zombies.len()) as u64;

            let mut due: Vec<(f64, RequestId)> = self
                .in_flight
                .iter()
                .filter_map(|(&id, f)| match f.scheduled {
                    Some((at, _)) if at <= now && at <= f.handle.deadline => Some((at, id)),
                    _ => None,
                })
                .collect();
            due.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (at, id) in due {
                let f = self.in_flight.remove(&id).expect("due request is in flight");
                let (_, outcome) = f.scheduled.expect("due request is scheduled");
                self.resolve(id, Resolution::Completed);
                self.stats.completed += 1;
                out.push(PlanResponse {
                    request_id: id,
                    agent_id: f.handle.agent_id,
                    outcome,
                    latency: at - f.issued_at,
                    completed_at: at,
                });
            }

            let expired: Vec<RequestId> = self
                .in_flight
                .iter()
                .filter(|(_, f)| f.handle.deadline <= now)
                .map(|(&id, _)| id)
                .collect();
            for id in expired {
                let f = self.in_flight.remove(&id).expect("expired request is in flight");
                if let Some((at, _)) = f.scheduled {
                    self.zombies.push(at);
                }
                out.push(self.time_out(f.handle));
            }
            let mut kept = VecDeque::with_capacity(self.queue.len());
            for (handle, request) in std::mem::take(&mut self.queue) {
                if handle.deadline <= now {
                    out.push(self.time_out(handle));
                } else {
                    kept.push_back((handle, request));
                }
            }
            self.queue = kept;

            let mut dispatched = false;
            while self.in_flight.len() < self.config.max_in_flight {
                let Some((handle, request)) = self.queue.pop_front() else {
                    break;
                };
                self.dispatch(handle, request, now);
                dispatched = true;
            }
            if !dispatched {
                break;
            }
        }
        out.sort_by(|a, b| a.completed_at.total_cmp(&b.completed_at).then(a.request_id.cmp(&b.request_id)));
        out
    }

    fn time_out(&mut self, handle: RequestHandle) -> PlanResponse {
        self.resolve(handle.request_id, Resolution::TimedOut);
        self.stats.timed_out += 1;
        PlanResponse {
            request_id: handle.request_id,
            agent_id: handle.agent_id,
            outcome: PlanOutcome::Failure(FailureReason::Timeout),
            latency: handle.deadline - handle.submitted_at,
            completed_at: handle.deadline,
        }
    }

    /// Resolves an outstanding request as cancelled. A result that arrives
    /// later is counted as stale and never delivered. Cancelling twice is a
    /// counted no-op reported as `AlreadyResolved`.
    pub fn cancel(&mut self, id: RequestId) -> Result<(), ManagerError> {
        if let Some(pos) = self.queue.iter().position(|(h, _)| h.request_id == id) {
            self.queue.remove(pos);
        } else if let Some(f) = self.in_flight.remove(&id) {
            if let Some((at, _)) = f.scheduled {
                self.zombies.push(at);
            }
        } else if self.resolved.contains_key(&id) {
            self.stats.redundant_cancels += 1;
            return Err(ManagerError::AlreadyResolved(id));
        } else {
            return Err(ManagerError::UnknownRequest(id));
        }
        self.resolve(id, Resolution::Cancelled);
        self.stats.cancelled += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congestion::CongestionSnapshot;
    use crate::network::{default_map, NodeId, Path};
    use crate::planner::{LatencyModel, NeverBackend, OracleBackend, OracleStrategy, Scheduled};
    use std::sync::Mutex;
    use std::time::Duration;

    fn request(id: u64, at: f64) -> PlanRequest {
        PlanRequest {
            request_id: RequestId(id),
            agent_id: AgentId(id as u32),
            origin: NodeId(0),
            destination: NodeId(11),
            snapshot: Arc::new(CongestionSnapshot::empty(at)),
            issued_at: at,
        }
    }

    fn oracle(latency: f64) -> Backend {
        Backend::virtual_time(OracleBackend::new(
            Arc::new(default_map()),
            OracleStrategy::CongestionAware,
            LatencyModel::Fixed(latency),
            0,
        ))
    }

    struct FixedDelay(f64);

    impl VirtualPlanner for FixedDelay {
        fn plan(&mut self, _r: &PlanRequest, _d: u64) -> Option<Scheduled> {
            Some(Scheduled {
                outcome: PlanOutcome::Success(Path::from_ids([0, 1])),
                latency: self.0,
            })
        }
    }

    #[test]
    fn dispatches_immediately_when_idle() {
        let mut m = RequestManager::new(ManagerConfig::default(), oracle(3.2));
        m.submit(request(1, 0.0));
        assert_eq!(m.stats().in_flight, 1);
        assert_eq!(m.stats().queued, 0);
    }

    #[test]
    fn in_flight_limit() {
        let mut m = RequestManager::new(ManagerConfig::default(), oracle(3.2));
        for i in 0..5 {
            m.submit(request(i, 0.0));
        }
        assert_eq!(m.stats().in_flight, 4);
        assert_eq!(m.stats().queued, 1);
        let out = m.drain_completions(3.2);
        assert_eq!(out.len(), 5);
        assert!(m.is_quiescent());
    }

    #[test]
    fn queue_full_is_delivered_as_failure() {
        let mut m = RequestManager::new(ManagerConfig::default(), Backend::virtual_time(NeverBackend));
        for i in 0..(4 + 256 + 1) {
            m.submit(request(i, 0.0));
        }
        let s = m.stats();
        assert_eq!((s.in_flight, s.queued, s.rejected), (4, 256, 1));
        let out = m.drain_completions(0.1);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].request_id, RequestId(260));
        assert_eq!(out[0].outcome, PlanOutcome::Failure(FailureReason::QueueFull));
    }

    #[test]
    fn virtual_delivery_time() {
        let mut m = RequestManager::new(ManagerConfig::default(), oracle(3.2));
        m.submit(request(1, 10.0));
        let mut delivered_at = None;
        for tick in 101..=140 {
            let now = tick as f64 * 0.1;
            let out = m.drain_completions(now);
            if !out.is_empty() {
                delivered_at = Some((now, out[0].completed_at, out[0].latency));
                break;
            }
        }
        let (now, completed_at, latency) = delivered_at.unwrap();
        assert!((13.2 - 1e-9..13.3).contains(&now));
        assert!((completed_at - 13.2).abs() < 1e-9);
        assert!((latency - 3.2).abs() < 1e-9);
    }

    #[test]
    fn timeout_wins_over_slow_backend() {
        let mut m = RequestManager::new(ManagerConfig::default(), Backend::virtual_time(FixedDelay(15.0)));
        m.submit(request(1, 5.0));
        assert!(m.drain_completions(14.9).is_empty());
        let out = m.drain_completions(15.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].outcome, PlanOutcome::Failure(FailureReason::Timeout));
        assert_eq!(out[0].completed_at, 15.0);
        assert!(m.drain_completions(25.0).is_empty());
        let s = m.stats();
        assert_eq!((s.timed_out, s.stale_dropped, s.completed), (1, 1, 0));
    }

    #[test]
    fn queued_requests_expire_too() {
        let cfg = ManagerConfig {
            max_in_flight: 1,
            ..ManagerConfig::default()
        };
        let mut m = RequestManager::new(cfg, Backend::virtual_time(NeverBackend));
        m.submit(request(1, 0.0));
        m.submit(request(2, 1.0));
        let out = m.drain_completions(10.0);
        assert_eq!(out.len(), 1);
        let out = m.drain_completions(11.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].request_id, RequestId(2));
        assert!(m.is_quiescent());
    }

    #[test]
    fn empty_drain() {
        let mut m = RequestManager::new(ManagerConfig::default(), oracle(1.0));
        assert!(m.drain_completions(100.0).is_empty());
    }

    #[test]
    fn cancel_queued_and_in_flight() {
        let cfg = ManagerConfig {
            max_in_flight: 1,
            ..ManagerConfig::default()
        };
        let mut m = RequestManager::new(cfg, oracle(2.0));
        m.submit(request(1, 0.0));
        m.submit(request(2, 0.0));
        m.cancel(RequestId(2)).unwrap();
        assert_eq!(m.stats().queued, 0);
        m.cancel(RequestId(1)).unwrap();
        assert!(m.drain_completions(5.0).is_empty());
        let s = m.stats();
        assert_eq!((s.cancelled, s.stale_dropped, s.dispatched), (2, 1, 1));
        assert_eq!(m.cancel(RequestId(1)), Err(ManagerError::AlreadyResolved(RequestId(1))));
        assert_eq!(m.stats().redundant_cancels, 1);
        assert_eq!(m.cancel(RequestId(99)), Err(ManagerError::UnknownRequest(RequestId(99))));
    }

    #[test]
    fn accounting_balances() {
        let cfg = ManagerConfig {
            max_in_flight: 2,
            queue_capacity: 3,
            timeout: 4.0,
        };
        let mut m = RequestManager::new(cfg, Backend::virtual_time(FixedDelay(3.0)));
        for i in 0..8 {
            m.submit(request(i, i as f64 * 0.5));
        }
        m.cancel(RequestId(3)).ok();
        let mut delivered = 0;
        let mut t = 0.0;
        while !m.is_quiescent() {
            t += 0.1;
            delivered += m.drain_completions(t).len();
        }
        let s = m.stats();
        assert_eq!(s.completed + s.timed_out + s.cancelled + s.rejected, s.submitted);
        assert_eq!(delivered as u64, s.completed + s.timed_out + s.rejected);
    }

    struct SlowThreaded {
        delay: Duration,
        calls: Mutex<u32>,
    }

    impl BlockingPlanner for SlowThreaded {
        fn plan(&self, _r: &PlanRequest) -> PlanOutcome {
            *self.calls.lock().unwrap() += 1;
            thread::sleep(self.delay);
            PlanOutcome::Success(Path::from_ids([0, 1]))
        }
    }

    #[test]
    fn threaded_backend_never_blocks_the_caller() {
        let planner = Arc::new(SlowThreaded {
            delay: Duration::from_millis(200),
            calls: Mutex::new(0),
        });
        let mut m = RequestManager::new(ManagerConfig::default(), Backend::threaded(planner.clone()));
        let started = std::time::Instant::now();
        m.submit(request(1, 0.0));
        assert!(m.drain_completions(0.0).is_empty());
        assert!(started.elapsed() < Duration::from_millis(150));
        let mut out = Vec::new();
        for i in 0..100 {
            thread::sleep(Duration::from_millis(10));
            out = m.drain_completions(i as f64 * 0.01);
            if !out.is_empty() {
                break;
            }
        }
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].agent_id, AgentId(1));
        assert_eq!(*planner.calls.lock().unwrap(), 1);
    }

    #[test]
    fn threaded_late_result_after_cancel_is_stale() {
        let planner = Arc::new(SlowThreaded {
            delay: Duration::from_millis(50),
            calls: Mutex::new(0),
        });
        let mut m = RequestManager::new(ManagerConfig::default(), Backend::threaded(planner));
        m.submit(request(1, 0.0));
        m.cancel(RequestId(1)).unwrap();
        thread::sleep(Duration::from_millis(200));
        assert!(m.drain_completions(1.0).is_empty());
        assert_eq!(m.stats().stale_dropped, 1);
    }
}
