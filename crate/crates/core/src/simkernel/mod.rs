//! Deterministic request simulation over virtual time.
//!
//! Requests arrive open-loop, walk the dependency graph depth-first from the
//! entry service, and pick up whatever deviations the cluster state currently
//! carries. Every request produces one trace, its log lines and its share of
//! the per-second metric buckets.

mod replay;
mod traverse;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::TelemetryStore;
use crate::topology::{load_app, AppName, ClusterState};

pub use replay::{export_schedule, parse_schedule, SCHEDULE_HEADER};

pub const DEFAULT_STEP_STRIDE_S: u64 = 30;
/// Latency multiplier contributed by each in-flight request.
const LOAD_PER_INFLIGHT: f64 = 0.02;
/// Cap on the load factor, so latency grows at most 4x.
const MAX_LOAD_FACTOR: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("unknown entry service '{0}'")]
    UnknownEntryService(String),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("malformed trace at line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    now_ms: u64,
    pub step_stride_s: u64,
}

impl SimClock {
    pub fn new(step_stride_s: u64) -> Self {
        Self { now_ms: 0, step_stride_s }
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    fn advance(&mut self, delta_ms: u64) {
        self.now_ms += delta_ms;
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new(DEFAULT_STEP_STRIDE_S)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Requests per second.
    pub rate: f64,
    /// Seconds of load; 0 runs until stopped.
    pub duration_s: u64,
    pub entry: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Rate { rate: f64, start_ms: u64, total: Option<u64> },
    Replay(Vec<(f64, String)>),
}

/// A started workload; hand it to [`SimKernel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    entry: String,
    seed: u64,
    source: Source,
}

impl Workload {
    /// Replace the rate process with an explicit arrival schedule.
    pub fn replay(state: &ClusterState, seed: u64, schedule: Vec<(f64, String)>) -> Result<Self, SimError> {
        let entry = state.entry_service().to_string();
        if let Some((_, bad)) = schedule.iter().find(|(_, e)| *e != entry) {
            return Err(SimError::UnknownEntryService(bad.clone()));
        }
        Ok(Self { entry, seed, source: Source::Replay(schedule) })
    }
}

/// Validate `spec` against the deployed app; load begins at the state's clock.
pub fn start_workload(state: &ClusterState, spec: &WorkloadSpec) -> Result<Workload, SimError> {
    if spec.entry != state.entry_service() {
        return Err(SimError::UnknownEntryService(spec.entry.clone()));
    }
    if !(spec.rate.is_finite() && spec.rate > 0.0) {
        return Err(SimError::InvalidWorkload(format!("rate must be positive, got {}", spec.rate)));
    }
    let total = (spec.duration_s > 0).then(|| (spec.rate * spec.duration_s as f64).round() as u64);
    Ok(Workload {
        entry: spec.entry.clone(),
        seed: spec.seed,
        source: Source::Rate { rate: spec.rate, start_ms: state.now_ms(), total },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ConnectionRefused,
    Unavailable,
    Timeout,
    AuthError,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ConnectionRefused => "connection_refused",
            ErrorCode::Unavailable => "unavailable",
            ErrorCode::Timeout => "timeout",
            ErrorCode::AuthError => "auth_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RequestStatus {
    Ok,
    Error { code: ErrorCode, failing_service: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub request_id: u64,
    pub arrival_ms: f64,
    /// Edges in visit order; the first is ("client", entry).
    pub path: Vec<(String, String)>,
    pub status: RequestStatus,
    pub latency_ms: f64,
}

impl RequestOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == RequestStatus::Ok
    }
}

/// Generates and simulates requests for one session.
#[derive(Debug, Clone)]
pub struct SimKernel {
    workload: Workload,
    /// Request ids already handed out by earlier workloads.
    id_base: u64,
    next_index: u64,
    /// End times (microseconds) of requests that may still be in flight.
    inflight: BinaryHeap<Reverse<u64>>,
}

impl SimKernel {
    pub fn new(workload: Workload) -> Self {
        Self { workload, id_base: 0, next_index: 0, inflight: BinaryHeap::new() }
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    /// Swap the workload; request ids keep counting up.
    pub fn set_workload(&mut self, workload: Workload) {
        self.id_base += self.next_index;
        self.next_index = 0;
        self.workload = workload;
    }

    fn arrival(&self, i: u64) -> Option<f64> {
        match &self.workload.source {
            Source::Rate { rate, start_ms, total } => {
                if total.is_some_and(|n| i >= n) {
                    return None;
                }
                Some(*start_ms as f64 + i as f64 * 1000.0 / rate)
            }
            Source::Replay(s) => s.get(i as usize).map(|(t, _)| *t),
        }
    }

    /// Arrival times in `[from_ms, to_ms)` without simulating them.
    pub fn schedule(&self, from_ms: u64, to_ms: u64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0;
        while let Some(t) = self.arrival(i) {
            if t >= to_ms as f64 {
                break;
            }
            if t >= from_ms as f64 {
                out.push(t);
            }
            i += 1;
        }
        out
    }

    fn load_factor(&mut self, at_ms: f64) -> f64 {
        let at = (at_ms * 1000.0) as u64;
        while self.inflight.peek().is_some_and(|Reverse(end)| *end <= at) {
            self.inflight.pop();
        }
        (LOAD_PER_INFLIGHT * self.inflight.len() as f64).min(MAX_LOAD_FACTOR)
    }

    /// Process every arrival in `[now, now + delta)` and move the clock.
    pub fn advance(
        &mut self,
        state: &ClusterState,
        clock: &mut SimClock,
        telemetry: &mut TelemetryStore,
        delta_ms: u64,
    ) -> Vec<RequestOutcome> {
        let from = clock.now_ms();
        let to = from + delta_ms;
        let ns = state.namespace();
        let running: Vec<u32> =
            telemetry.services().iter().map(|s| state.running_pods(ns, s) as u32).collect();
        telemetry.extend_horizon(from, to, &running);
        let mut out = Vec::new();
        while let Some(t) = self.arrival(self.next_index) {
            if t >= to as f64 {
                break;
            }
            let id = self.id_base + self.next_index;
            self.next_index += 1;
            if t < from as f64 {
                continue;
            }
            let lf = self.load_factor(t);
            let mut rng = ChaCha8Rng::seed_from_u64(self.workload.seed);
            rng.set_stream(id);
            let outcome = traverse::run_request(state, &self.workload.entry, id, t, lf, &mut rng, telemetry);
            self.inflight.push(Reverse(((t + outcome.latency_ms) * 1000.0) as u64));
            out.push(outcome);
        }
        clock.advance(delta_ms);
        out
    }
}

/// A deployed app with its clock, kernel and telemetry.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub state: ClusterState,
    pub clock: SimClock,
    pub telemetry: TelemetryStore,
    pub kernel: SimKernel,
}

impl Simulation {
    pub fn new(app: AppName, rate: f64, seed: u64, step_stride_s: u64) -> Self {
        let state = load_app(app);
        let spec = WorkloadSpec { rate, duration_s: 0, entry: state.entry_service().to_string(), seed };
        let workload = start_workload(&state, &spec).expect("entry service is valid by construction");
        Self::with_workload(state, workload, step_stride_s)
    }

    pub fn with_workload(state: ClusterState, workload: Workload, step_stride_s: u64) -> Self {
        let telemetry = TelemetryStore::new(state.namespace(), state.service_order());
        let mut clock = SimClock::new(step_stride_s);
        clock.now_ms = state.now_ms();
        Self { state, clock, telemetry, kernel: SimKernel::new(workload) }
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn advance_ms(&mut self, delta_ms: u64) -> Vec<RequestOutcome> {
        let out = self.kernel.advance(&self.state, &mut self.clock, &mut self.telemetry, delta_ms);
        self.state.set_time(self.clock.now_ms());
        out
    }

    pub fn advance_s(&mut self, delta_s: u64) -> Vec<RequestOutcome> {
        self.advance_ms(delta_s * 1000)
    }

    /// Advance by one orchestrator step.
    pub fn step(&mut self) -> Vec<RequestOutcome> {
        self.advance_s(self.clock.step_stride_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faultlib::{inject, FaultName, FaultSpec};

    fn hotel(rate: f64, duration_s: u64, seed: u64) -> (ClusterState, SimKernel, SimClock, TelemetryStore) {
        let state = load_app(AppName::HotelReservation);
        let spec = WorkloadSpec { rate, duration_s, entry: "frontend".into(), seed };
        let k = SimKernel::new(start_workload(&state, &spec).unwrap());
        let t = TelemetryStore::new(state.namespace(), state.service_order());
        (state, k, SimClock::default(), t)
    }

    #[test]
    fn rate_times_duration_requests() {
        let (state, mut k, mut c, mut t) = hotel(100.0, 10, 1);
        assert!(k.advance(&state, &mut c, &mut t, 0).is_empty());
        let out = k.advance(&state, &mut c, &mut t, 20_000);
        assert_eq!(out.len(), 1000);
        assert!(out.iter().all(RequestOutcome::is_ok));
        assert_eq!(t.traces().len(), 1000);
    }

    #[test]
    fn window_split_does_not_change_outcomes() {
        let (state, mut k1, mut c1, mut t1) = hotel(37.0, 0, 9);
        let whole = k1.advance(&state, &mut c1, &mut t1, 10_000);
        let (state, mut k2, mut c2, mut t2) = hotel(37.0, 0, 9);
        let mut parts = Vec::new();
        for d in [1, 2_999, 3_000, 4_000] {
            parts.extend(k2.advance(&state, &mut c2, &mut t2, d));
        }
        assert_eq!(whole, parts);
    }

    #[test]
    fn unknown_entry_and_bad_rate_rejected() {
        let state = load_app(AppName::HotelReservation);
        let spec = WorkloadSpec { rate: 10.0, duration_s: 0, entry: "geo".into(), seed: 0 };
        assert_eq!(start_workload(&state, &spec), Err(SimError::UnknownEntryService("geo".into())));
        let spec = WorkloadSpec { rate: 0.0, duration_s: 0, entry: "frontend".into(), seed: 0 };
        assert!(matches!(start_workload(&state, &spec), Err(SimError::InvalidWorkload(_))));
    }

    #[test]
    fn nominal_path_visits_every_service_once() {
        let (state, mut k, mut c, mut t) = hotel(5.0, 0, 3);
        let out = k.advance(&state, &mut c, &mut t, 1000);
        let p = &out[0].path;
        assert_eq!(p[0], ("client".to_string(), "frontend".to_string()));
        assert_eq!(p.len(), state.service_order().len());
        assert_eq!(t.traces()[0].spans.len(), p.len());
    }

    #[test]
    fn port_misconfig_refuses_at_target() {
        let mut state = load_app(AppName::SocialNetwork);
        let spec = FaultSpec::new(FaultName::TargetPortMisconfig, AppName::SocialNetwork, &["user-service"]);
        inject(&mut state, &spec).unwrap();
        let w = start_workload(&state, &WorkloadSpec { rate: 20.0, duration_s: 0, entry: "nginx-thrift".into(), seed: 2 }).unwrap();
        let mut sim = Simulation::with_workload(state, w, 30);
        let out = sim.advance_s(5);
        for o in &out {
            let reaches = o.path.iter().any(|(_, callee)| callee == "user-service");
            if reaches {
                assert_eq!(
                    o.status,
                    RequestStatus::Error { code: ErrorCode::ConnectionRefused, failing_service: "user-service".into() }
                );
            }
        }
        assert!(out.iter().all(|o| !o.is_ok()));
        let logs = sim.telemetry.get_logs("test-social-network", None).unwrap();
        assert!(logs.contains("connection refused to user-service:"));
    }
}
