use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ErrorCode, RequestOutcome, RequestStatus};
use crate::faultlib::{auth_failure, AuthFailure, BUGGY_IMAGE_TAGS};
use crate::telemetry::{templates, LogEntry, LogLevel, SpanStatus, Trace, TraceSpan, TelemetryStore};
use crate::topology::ClusterState;

const CLIENT: &str = "client";
/// Time a refused or unroutable call takes to fail.
const FAST_FAIL_MS: f64 = 1.0;
pub(crate) const TIMEOUT_MS: f64 = 1000.0;

struct Failure {
    code: ErrorCode,
    service: String,
    /// The direct caller already wrote the specific log line.
    caller_logged: bool,
}

struct Walk<'a> {
    state: &'a ClusterState,
    ns: &'a str,
    rng: &'a mut ChaCha8Rng,
    load: f64,
    trace_id: String,
    spans: Vec<TraceSpan>,
    logs: Vec<LogEntry>,
    visited: BTreeSet<String>,
    path: Vec<(String, String)>,
}

impl Walk<'_> {
    fn log(&mut self, t: f64, service: &str, level: LogLevel, message: String) {
        let Some(pod) = self.state.serving_pod(self.ns, service) else { return };
        self.logs.push(LogEntry {
            t,
            namespace: self.ns.to_string(),
            service: service.to_string(),
            pod: pod.pod_name.clone(),
            level,
            message,
        });
    }

    fn open_span(&mut self, caller: &str, callee: &str, parent: Option<u32>, t: f64) -> usize {
        let operation = if caller == CLIENT { "GET /".to_string() } else { format!("{caller}->{callee}") };
        self.spans.push(TraceSpan {
            trace_id: self.trace_id.clone(),
            span_id: self.spans.len() as u32 + 1,
            parent_span_id: parent,
            service: callee.to_string(),
            operation,
            start: t,
            duration: 0.0,
            status: SpanStatus::Ok,
        });
        self.spans.len() - 1
    }

    fn close(&mut self, idx: usize, end: f64, failure: Option<Failure>) -> (f64, Option<Failure>) {
        let span = &mut self.spans[idx];
        span.duration = end - span.start;
        if failure.is_some() {
            span.status = SpanStatus::Error;
        }
        (end, failure)
    }

    /// Call `callee` from `caller` at time `t`; returns the finish time.
    fn call(&mut self, caller: &str, callee: &str, parent: Option<u32>, t: f64) -> (f64, Option<Failure>) {
        let state = self.state;
        let svc = state.service(self.ns, callee).expect("dependencies resolve");
        self.visited.insert(callee.to_string());
        self.path.push((caller.to_string(), callee.to_string()));
        let idx = self.open_span(caller, callee, parent, t);
        let is_client = caller == CLIENT;
        let fail = |code, caller_logged| Some(Failure { code, service: callee.to_string(), caller_logged });

        if svc.svc_target_port != svc.container_port {
            let end = t + FAST_FAIL_MS;
            if !is_client {
                self.log(end, caller, LogLevel::Error, templates::connection_refused(callee, svc.svc_target_port));
            }
            return self.close(idx, end, fail(ErrorCode::ConnectionRefused, !is_client));
        }
        if state.serving_pod(self.ns, callee).is_none() {
            let end = t + FAST_FAIL_MS;
            if !is_client {
                self.log(end, caller, LogLevel::Error, templates::no_endpoints(callee));
            }
            return self.close(idx, end, fail(ErrorCode::Unavailable, !is_client));
        }
        let loss = state.network(callee).loss_rate;
        if loss > 0.0 && self.rng.gen::<f64>() < loss {
            let end = t + TIMEOUT_MS;
            if !is_client {
                self.log(end, caller, LogLevel::Error, templates::timeout(callee, TIMEOUT_MS));
            }
            return self.close(idx, end, fail(ErrorCode::Timeout, !is_client));
        }

        let own = svc.base_latency_ms * (1.0 + self.load);
        let mut now = t + own;

        if let Some(auth) = state.service(self.ns, caller).ok().and_then(|c| c.requires_auth.as_ref()) {
            if auth.store == callee {
                if let Some(reason) = auth_failure(state, self.ns, caller, callee, &auth.principal) {
                    let (client_msg, store_msg) = match reason {
                        AuthFailure::MissingCredentials => (
                            templates::auth_failed(&auth.principal),
                            format!("rejected connection from {caller}: no credentials supplied"),
                        ),
                        AuthFailure::UserNotFound => (
                            templates::user_not_found(&auth.principal),
                            format!("rejected connection from {caller}: user {} not found", auth.principal),
                        ),
                        AuthFailure::NotAuthorized => (
                            templates::not_authorized(callee, &auth.principal),
                            format!("command from {caller} denied: {} lacks required role", auth.principal),
                        ),
                    };
                    self.log(now, callee, LogLevel::Error, store_msg);
                    self.log(now, caller, LogLevel::Error, client_msg);
                    return self.close(idx, now, fail(ErrorCode::AuthError, true));
                }
            }
        }

        if BUGGY_IMAGE_TAGS.contains(&svc.image_tag.as_str()) {
            let msg = match svc.dependencies.first().and_then(|d| state.service(self.ns, d).ok()) {
                Some(dep) => templates::connection_refused(&dep.name, dep.container_port),
                None => "connection refused".to_string(),
            };
            self.log(now, callee, LogLevel::Error, msg);
            return self.close(idx, now, fail(ErrorCode::ConnectionRefused, false));
        }

        let span_id = self.spans[idx].span_id;
        for dep in &svc.dependencies {
            if self.visited.contains(dep) {
                continue;
            }
            let (end, failure) = self.call(callee, dep, Some(span_id), now);
            now = end;
            if let Some(f) = failure {
                if !f.caller_logged {
                    self.log(now, callee, LogLevel::Error, templates::downstream_failed(dep, f.code.as_str()));
                }
                let f = Failure { caller_logged: !is_client, ..f };
                if !is_client {
                    self.log(now, caller, LogLevel::Error, templates::downstream_failed(callee, f.code.as_str()));
                }
                return self.close(idx, now, Some(f));
            }
        }
        self.close(idx, now, None)
    }
}

pub(super) fn run_request(
    state: &ClusterState,
    entry: &str,
    request_id: u64,
    arrival_ms: f64,
    load: f64,
    rng: &mut ChaCha8Rng,
    telemetry: &mut TelemetryStore,
) -> RequestOutcome {
    let mut walk = Walk {
        state,
        ns: state.namespace(),
        rng,
        load,
        trace_id: format!("{request_id:016x}"),
        spans: Vec::new(),
        logs: Vec::new(),
        visited: BTreeSet::new(),
        path: Vec::new(),
    };
    let (end, failure) = walk.call(CLIENT, entry, None, arrival_ms);
    let latency_ms = end - arrival_ms;
    let status = match failure {
        None => RequestStatus::Ok,
        Some(f) => RequestStatus::Error { code: f.code, failing_service: f.service },
    };
    let info = if status == RequestStatus::Ok {
        templates::request_ok(latency_ms)
    } else {
        templates::request_failed(latency_ms)
    };
    walk.log(end, entry, LogLevel::Info, info);
    let Walk { spans, logs, path, trace_id, .. } = walk;
    for l in logs {
        telemetry.push_log(l);
    }
    telemetry.push_trace(Trace { trace_id, request_id, spans });
    RequestOutcome { request_id, arrival_ms, path, status, latency_ms }
}
