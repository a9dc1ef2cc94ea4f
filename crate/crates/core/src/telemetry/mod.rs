//! Append-only store for simulated logs, metrics and traces.
//!
//! The sim kernel is the only writer. Queries are pure functions of the
//! store contents and the requested window, so repeating a query returns the
//! same bytes.

mod export;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{dir_digest, export_offline, ExportManifest, EXPORT_FORMAT_VERSION};

/// Verbatim text shown to agents that name an unknown namespace or service.
pub const NO_SUCH_TARGET: &str = "Error: Your service/namespace does not exist.";
/// Trailing window `get_logs` covers.
pub const LOG_WINDOW_S: u64 = 120;
/// Most lines `get_logs` returns; older lines are dropped with a marker.
pub const LOG_LINE_CAP: usize = 2000;
pub const DEFAULT_TRACE_DURATION_S: u64 = 5;

pub const METRIC_NAMES: [&str; 6] = ["qps", "error_rate", "latency_p50_ms", "latency_p99_ms", "cpu_pct", "mem_pct"];
const METRICS_HEADER: &str = "t_s\tservice\tmetric\tvalue";

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("{}", NO_SUCH_TARGET)]
    NoSuchTarget,
    #[error("duration must be positive")]
    EmptyWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LogLevel {
    #[serde(rename = "INFO")]
    Info,
    #[serde(rename = "WARN")]
    Warn,
    #[serde(rename = "ERROR")]
    Error,
}

impl LogLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            LogLevel::Info => "INFO",
            LogLevel::Warn => "WARN",
            LogLevel::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub namespace: String,
    pub service: String,
    pub pod: String,
    pub level: LogLevel,
    pub message: String,
}

impl LogEntry {
    fn line(&self) -> String {
        format!("{:.3} {:<5} {} {}", self.t / 1000.0, self.level.as_str(), self.pod, self.message)
    }
}

/// Log templates. Grading and tests grep for these, keep them stable.
pub mod templates {
    pub fn request_ok(latency_ms: f64) -> String {
        format!("GET / 200 {latency_ms:.1}ms")
    }
    pub fn request_failed(latency_ms: f64) -> String {
        format!("GET / 500 {latency_ms:.1}ms")
    }
    pub fn connection_refused(service: &str, port: u16) -> String {
        format!("connection refused to {service}:{port}")
    }
    pub fn no_endpoints(service: &str) -> String {
        format!("no endpoints available for service {service}")
    }
    pub fn timeout(service: &str, after_ms: f64) -> String {
        format!("request to {service} timed out after {after_ms:.0}ms")
    }
    pub fn auth_failed(principal: &str) -> String {
        format!("authentication failed for {principal}")
    }
    pub fn user_not_found(principal: &str) -> String {
        format!("user not found: {principal}")
    }
    pub fn not_authorized(store: &str, principal: &str) -> String {
        format!("not authorized on {store} to execute command as {principal}")
    }
    pub fn downstream_failed(service: &str, code: &str) -> String {
        format!("call to {service} failed: {code}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpan {
    pub trace_id: String,
    pub span_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_span_id: Option<u32>,
    pub service: String,
    pub operation: String,
    pub start: f64,
    pub duration: f64,
    pub status: SpanStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_id: String,
    pub request_id: u64,
    pub spans: Vec<TraceSpan>,
}

impl Trace {
    pub fn start(&self) -> f64 {
        self.spans.first().map_or(0.0, |s| s.start)
    }

    pub fn failed(&self) -> bool {
        self.spans.first().is_some_and(|s| s.status == SpanStatus::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub t: u64,
    pub service: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
struct Bucket {
    count: u32,
    errors: u32,
    latencies: Vec<f64>,
    running: u32,
}

#[derive(Debug, Clone)]
pub struct TelemetryStore {
    namespace: String,
    services: Vec<String>,
    index: BTreeMap<String, usize>,
    logs: Vec<LogEntry>,
    traces: Vec<Trace>,
    buckets: BTreeMap<u64, Vec<Bucket>>,
    horizon_ms: u64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

impl TelemetryStore {
    pub fn new(namespace: &str, services: &[String]) -> Self {
        Self {
            namespace: namespace.to_string(),
            services: services.to_vec(),
            index: services.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect(),
            logs: Vec::new(),
            traces: Vec::new(),
            buckets: BTreeMap::new(),
            horizon_ms: 0,
        }
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn services(&self) -> &[String] {
        &self.services
    }

    /// Sim time up to which the store is complete.
    pub fn horizon_ms(&self) -> u64 {
        self.horizon_ms
    }

    pub fn logs(&self) -> &[LogEntry] {
        &self.logs
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    fn bucket_row(&mut self, bucket: u64) -> &mut Vec<Bucket> {
        let n = self.services.len();
        self.buckets.entry(bucket).or_insert_with(|| vec![Bucket::default(); n])
    }

    /// Mark `[from_ms, to_ms)` as simulated with the given Running pod counts.
    pub fn extend_horizon(&mut self, from_ms: u64, to_ms: u64, running: &[u32]) {
        if to_ms <= from_ms {
            return;
        }
        for b in from_ms / 1000..to_ms.div_ceil(1000) {
            let row = self.bucket_row(b);
            for (slot, r) in row.iter_mut().zip(running) {
                slot.running = *r;
            }
        }
        self.horizon_ms = self.horizon_ms.max(to_ms);
    }

    /// Insert keeping time order; ties keep arrival order.
    pub fn push_log(&mut self, entry: LogEntry) {
        let at = self.logs.partition_point(|e| e.t <= entry.t);
        self.logs.insert(at, entry);
    }

    pub fn push_trace(&mut self, trace: Trace) {
        for span in &trace.spans {
            let Some(&i) = self.index.get(&span.service) else { continue };
            let bucket = (trace.start() / 1000.0).floor() as u64;
            let slot = &mut self.bucket_row(bucket)[i];
            slot.count += 1;
            if span.status == SpanStatus::Error {
                slot.errors += 1;
            }
            slot.latencies.push(span.duration);
        }
        self.traces.push(trace);
    }

    fn check(&self, namespace: &str, service: Option<&str>) -> Result<(), TelemetryError> {
        if namespace != self.namespace || service.is_some_and(|s| !self.index.contains_key(s)) {
            return Err(TelemetryError::NoSuchTarget);
        }
        Ok(())
    }

    /// Fraction of requests arriving in `[start_ms, end_ms)` that failed.
    pub fn request_error_rate(&self, start_ms: u64, end_ms: u64) -> Option<f64> {
        let (lo, hi) = (start_ms as f64, end_ms as f64);
        let first = self.traces.partition_point(|t| t.start() < lo);
        let window = &self.traces[first..];
        let (mut n, mut bad) = (0u64, 0u64);
        for t in window.iter().take_while(|t| t.start() < hi) {
            n += 1;
            bad += u64::from(t.failed());
        }
        (n > 0).then(|| bad as f64 / n as f64)
    }

    /// Logs from the trailing window, newest last.
    pub fn get_logs(&self, namespace: &str, service: Option<&str>) -> Result<String, TelemetryError> {
        self.check(namespace, service)?;
        let from = self.horizon_ms.saturating_sub(LOG_WINDOW_S * 1000) as f64;
        let lines: Vec<&LogEntry> = self
            .logs
            .iter()
            .filter(|e| e.t >= from && service.is_none_or(|s| e.service == s))
            .collect();
        let mut out = String::new();
        let skip = lines.len().saturating_sub(LOG_LINE_CAP);
        if skip > 0 {
            let _ = writeln!(out, "... {skip} earlier lines truncated (showing last {LOG_LINE_CAP}) ...");
        }
        for e in &lines[skip..] {
            out.push_str(&e.line());
            out.push('\n');
        }
        Ok(out)
    }

    /// Logs of a single pod over the whole retention, as `kubectl logs` shows them.
    pub fn pod_logs(&self, pod: &str) -> String {
        let lines: Vec<&LogEntry> = self.logs.iter().filter(|e| e.pod == pod).collect();
        let skip = lines.len().saturating_sub(LOG_LINE_CAP);
        let mut out = String::new();
        for e in &lines[skip..] {
            out.push_str(&e.line());
            out.push('\n');
        }
        out
    }

    /// Metric points for every bucket starting in `[start_s, end_s)`.
    pub fn metric_points(&self, start_s: u64, end_s: u64) -> Vec<MetricPoint> {
        let mut out = Vec::new();
        for (&t, row) in self.buckets.range(start_s..end_s) {
            for (svc, b) in self.services.iter().zip(row) {
                let mut lat = b.latencies.clone();
                lat.sort_by(f64::total_cmp);
                let qps = f64::from(b.count);
                let err = if b.count == 0 { 0.0 } else { f64::from(b.errors) / qps };
                let (cpu, mem) = if b.running == 0 {
                    (0.0, 0.0)
                } else {
                    let per_pod = qps / f64::from(b.running);
                    ((2.0 + 1.5 * per_pod).min(100.0), (20.0 + 0.25 * per_pod).min(100.0))
                };
                let values = [qps, err, percentile(&lat, 0.5), percentile(&lat, 0.99), cpu, mem];
                for (name, v) in METRIC_NAMES.iter().zip(values) {
                    out.push(MetricPoint { t, service: svc.clone(), metric: name.to_string(), value: round3(v) });
                }
            }
        }
        out
    }

    fn window_s(&self, duration_s: u64) -> (u64, u64) {
        let end = self.horizon_ms / 1000;
        (end.saturating_sub(duration_s), end)
    }

    /// Write the trailing `duration_s` seconds of metrics as TSV; returns the point count.
    pub fn write_metrics(&self, namespace: &str, duration_s: u64, dir: &Path) -> Result<usize, QueryError> {
        self.check(namespace, None)?;
        if duration_s == 0 {
            return Err(TelemetryError::EmptyWindow.into());
        }
        let (lo, hi) = self.window_s(duration_s);
        Ok(write_metrics_file(&self.metric_points(lo, hi), dir)?)
    }

    pub fn traces_in(&self, start_ms: f64, end_ms: f64) -> &[Trace] {
        let lo = self.traces.partition_point(|t| t.start() < start_ms);
        let hi = self.traces.partition_point(|t| t.start() < end_ms);
        &self.traces[lo..hi]
    }

    /// Write traces that started in the trailing window, one JSON file each.
    pub fn write_traces(&self, namespace: &str, duration_s: u64, dir: &Path) -> Result<usize, QueryError> {
        self.check(namespace, None)?;
        if duration_s == 0 {
            return Err(TelemetryError::EmptyWindow.into());
        }
        let end = self.horizon_ms as f64;
        let start = end - (duration_s * 1000) as f64;
        Ok(write_trace_files(self.traces_in(start, end), dir)?)
    }
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("failed to write telemetry: {0}")]
    Io(#[from] io::Error),
}

pub(crate) fn write_metrics_file(points: &[MetricPoint], dir: &Path) -> io::Result<usize> {
    fs::create_dir_all(dir)?;
    let mut text = String::with_capacity(points.len() * 40 + 32);
    text.push_str(METRICS_HEADER);
    text.push('\n');
    for p in points {
        let _ = writeln!(text, "{}\t{}\t{}\t{}", p.t, p.service, p.metric, p.value);
    }
    fs::write(dir.join("metrics.tsv"), text)?;
    Ok(points.len())
}

pub(crate) fn write_trace_files(traces: &[Trace], dir: &Path) -> io::Result<usize> {
    fs::create_dir_all(dir)?;
    for t in traces {
        let body = serde_json::to_string_pretty(t).expect("trace serializes");
        fs::write(dir.join(format!("{}.json", t.trace_id)), body)?;
    }
    Ok(traces.len())
}

/// Parse a metrics TSV written by [`TelemetryStore::write_metrics`].
pub fn read_metrics_tsv(text: &str) -> Vec<MetricPoint> {
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let mut f = line.split('\t');
            Some(MetricPoint {
                t: f.next()?.parse().ok()?,
                service: f.next()?.to_string(),
                metric: f.next()?.to_string(),
                value: f.next()?.parse().ok()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> TelemetryStore {
        TelemetryStore::new("ns", &["front".to_string(), "db".to_string()])
    }

    fn trace(id: u64, t: f64, fail: bool) -> Trace {
        let status = if fail { SpanStatus::Error } else { SpanStatus::Ok };
        Trace {
            trace_id: format!("{id:016x}"),
            request_id: id,
            spans: vec![
                TraceSpan {
                    trace_id: format!("{id:016x}"),
                    span_id: 1,
                    parent_span_id: None,
                    service: "front".into(),
                    operation: "GET /".into(),
                    start: t,
                    duration: 15.0,
                    status,
                },
                TraceSpan {
                    trace_id: format!("{id:016x}"),
                    span_id: 2,
                    parent_span_id: Some(1),
                    service: "db".into(),
                    operation: "query".into(),
                    start: t + 5.0,
                    duration: 10.0,
                    status,
                },
            ],
        }
    }

    #[test]
    fn unknown_namespace_or_service_gives_verbatim_error() {
        let s = store();
        assert_eq!(s.get_logs("ns", Some("Social Network")).unwrap_err().to_string(), NO_SUCH_TARGET);
        assert_eq!(s.get_logs("other", None).unwrap_err(), TelemetryError::NoSuchTarget);
        assert_eq!(s.get_logs("ns", None).unwrap(), "");
    }

    #[test]
    fn error_rate_window_is_half_open() {
        let mut s = store();
        s.push_trace(trace(0, 0.0, false));
        s.push_trace(trace(1, 500.0, true));
        s.push_trace(trace(2, 1000.0, true));
        assert_eq!(s.request_error_rate(0, 1000), Some(0.5));
        assert_eq!(s.request_error_rate(1000, 2000), Some(1.0));
        assert_eq!(s.request_error_rate(2000, 3000), None);
    }

    #[test]
    fn metric_cardinality_and_values() {
        let mut s = store();
        s.extend_horizon(0, 10_000, &[1, 1]);
        for i in 0..20 {
            s.push_trace(trace(i, i as f64 * 500.0, i % 4 == 0));
        }
        let pts = s.metric_points(0, 10);
        assert_eq!(pts.len(), 10 * 2 * 6);
        let qps: Vec<f64> =
            pts.iter().filter(|p| p.service == "front" && p.metric == "qps").map(|p| p.value).collect();
        assert_eq!(qps, vec![2.0; 10]);
        let err0 = pts.iter().find(|p| p.t == 0 && p.metric == "error_rate").unwrap();
        assert_eq!(err0.value, 0.5);
        assert!(pts.iter().filter(|p| p.metric == "error_rate").all(|p| (0.0..=1.0).contains(&p.value)));
    }

    #[test]
    fn log_cap_keeps_newest_with_marker() {
        let mut s = store();
        s.extend_horizon(0, 100_000, &[1, 1]);
        for i in 0..(LOG_LINE_CAP + 5) {
            s.push_log(LogEntry {
                t: i as f64,
                namespace: "ns".into(),
                service: "front".into(),
                pod: "front-0".into(),
                level: LogLevel::Info,
                message: format!("line {i}"),
            });
        }
        let out = s.get_logs("ns", None).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), LOG_LINE_CAP + 1);
        assert!(lines[0].contains("5 earlier lines truncated"));
        assert!(lines.last().unwrap().ends_with(&format!("line {}", LOG_LINE_CAP + 4)));
    }

    #[test]
    fn metrics_tsv_round_trip() {
        let mut s = store();
        s.extend_horizon(0, 3000, &[2, 1]);
        s.push_trace(trace(0, 100.0, false));
        let dir = tempfile::tempdir().unwrap();
        let n = s.write_metrics("ns", 3, dir.path()).unwrap();
        assert_eq!(n, 36);
        let text = fs::read_to_string(dir.path().join("metrics.tsv")).unwrap();
        assert_eq!(read_metrics_tsv(&text), s.metric_points(0, 3));
        assert!(matches!(s.write_metrics("ns", 0, dir.path()), Err(QueryError::Telemetry(TelemetryError::EmptyWindow))));
    }
}
