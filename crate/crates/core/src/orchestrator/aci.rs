//! The agent-cloud interface: documented APIs and their dispatch.

use crate::simkernel::Simulation;
use crate::telemetry::{QueryError, TelemetryError, DEFAULT_TRACE_DURATION_S, NO_SUCH_TARGET};

use super::action::{Call, Value};
use super::shell::{Shell, SHELL_HELP};
use super::workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AciApi {
    pub name: &'static str,
    pub signature: &'static str,
    pub doc: &'static str,
}

/// Declares the API table; the doc comments become the agent-facing docs.
macro_rules! aci_apis {
    ($( $(#[doc = $doc:literal])+ fn $name:ident $sig:literal; )+) => {
        pub const ACI_APIS: &[AciApi] = &[
            $( AciApi { name: stringify!($name), signature: $sig, doc: concat!($($doc, "\n"),+) }, )+
        ];
    };
}

aci_apis! {
    /// Collects relevant log data from the services of a namespace.
    /// Covers the trailing 120 sim-seconds, newest last, at most 2000 lines.
    /// Omit the service to read every service in the namespace.
    /// Returns: str, the log lines.
    fn get_logs "(namespace: str, service: str = None) -> str";
    /// Collects metric data of the services of a namespace.
    /// Writes metrics.tsv (columns t_s, service, metric, value; one row per
    /// 1-second bucket, service and metric) for the trailing `duration` sim-seconds.
    /// Metrics: qps, error_rate, latency_p50_ms, latency_p99_ms, cpu_pct, mem_pct.
    /// Returns: str, path to the directory where metrics are saved.
    fn get_metrics "(namespace: str, duration: int) -> str";
    /// Collects trace data of the services of a namespace.
    /// Writes one <trace_id>.json file per request that started in the
    /// trailing `duration` sim-seconds.
    /// Returns: str, path to the directory where traces are saved.
    fn get_traces "(namespace: str, duration: int = 5) -> str";
    /// Executes a shell command against the cluster after applying the security policy.
    /// Pipes, redirection and command chaining are not available.
    /// Returns: str, the command output or an error message.
    fn exec_shell "(command: str) -> str";
    /// Submits your solution and ends the session. The expected payload
    /// depends on the task; see the task instructions.
    fn submit "(...) -> None";
}

pub fn api_names() -> Vec<&'static str> {
    ACI_APIS.iter().map(|a| a.name).collect()
}

/// Agent-facing API documentation.
pub fn api_docs() -> String {
    let mut out = String::new();
    for api in ACI_APIS {
        out.push_str(&format!("{}{}\n", api.name, api.signature));
        for line in api.doc.lines() {
            out.push_str("    ");
            out.push_str(line.trim());
            out.push('\n');
        }
        if api.name == "exec_shell" {
            out.push_str("    Allowed commands:\n");
            for line in SHELL_HELP.lines() {
                out.push_str("      ");
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out.trim_end().to_string()
}

fn type_error(call: &Call, msg: &str) -> String {
    let sig = ACI_APIS.iter().find(|a| a.name == call.name).map_or("", |a| a.signature);
    format!("TypeError: {}(): {msg}\nUsage: {}{sig}", call.name, call.name)
}

fn str_arg<'a>(call: &'a Call, i: usize, key: &str) -> Result<Option<&'a str>, String> {
    match call.arg(i, key) {
        None => Ok(None),
        Some(Value::Str(s)) => Ok(Some(s)),
        Some(_) => Err(type_error(call, &format!("argument '{key}' must be a string"))),
    }
}

fn int_arg(call: &Call, i: usize, key: &str) -> Result<Option<i64>, String> {
    match call.arg(i, key) {
        None => Ok(None),
        Some(Value::Int(n)) => Ok(Some(*n)),
        Some(_) => Err(type_error(call, &format!("argument '{key}' must be an integer"))),
    }
}

fn check_arity(call: &Call, allowed: &[&str]) -> Result<(), String> {
    if call.args.len() > allowed.len() {
        return Err(type_error(call, &format!("takes at most {} arguments", allowed.len())));
    }
    if let Some((k, _)) = call.kwargs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return Err(type_error(call, &format!("unexpected keyword argument '{k}'")));
    }
    Ok(())
}

fn query_err(e: QueryError) -> String {
    match e {
        QueryError::Telemetry(TelemetryError::NoSuchTarget) => NO_SUCH_TARGET.to_string(),
        QueryError::Telemetry(TelemetryError::EmptyWindow) => "Error: duration must be a positive integer.".to_string(),
        QueryError::Io(e) => format!("Error: failed to save telemetry: {e}"),
    }
}

/// Run one non-submit call and render its observation. Errors never escape.
pub fn dispatch(sim: &mut Simulation, ws: &mut Workspace, call: &Call) -> String {
    match dispatch_inner(sim, ws, call) {
        Ok(s) | Err(s) => s,
    }
}

fn dispatch_inner(sim: &mut Simulation, ws: &mut Workspace, call: &Call) -> Result<String, String> {
    match call.name.as_str() {
        "get_logs" => {
            check_arity(call, &["namespace", "service"])?;
            let ns = str_arg(call, 0, "namespace")?.ok_or_else(|| type_error(call, "missing argument 'namespace'"))?;
            let svc = str_arg(call, 1, "service")?;
            Ok(sim.telemetry.get_logs(ns, svc).unwrap_or_else(|e| e.to_string()))
        }
        "get_metrics" | "get_traces" => {
            check_arity(call, &["namespace", "duration"])?;
            let ns = str_arg(call, 0, "namespace")?.ok_or_else(|| type_error(call, "missing argument 'namespace'"))?;
            let duration = match int_arg(call, 1, "duration")? {
                Some(d) => d,
                None if call.name == "get_traces" => DEFAULT_TRACE_DURATION_S as i64,
                None => return Err(type_error(call, "missing argument 'duration'")),
            };
            if duration <= 0 {
                return Err("Error: duration must be a positive integer.".to_string());
            }
            if !sim.state.has_namespace(ns) {
                return Err(NO_SUCH_TARGET.to_string());
            }
            let kind = call.name.trim_start_matches("get_");
            let (virt, real) = ws.fresh_dir(kind);
            let res = if kind == "metrics" {
                sim.telemetry.write_metrics(ns, duration as u64, &real)
            } else {
                sim.telemetry.write_traces(ns, duration as u64, &real)
            };
            res.map(|_| virt).map_err(query_err)
        }
        "exec_shell" => {
            check_arity(call, &["command"])?;
            let cmd = str_arg(call, 0, "command")?.ok_or_else(|| type_error(call, "missing argument 'command'"))?;
            Ok(Shell { state: &mut sim.state, telemetry: &sim.telemetry, workspace: ws }.run(cmd))
        }
        other => Err(format!("Error: unknown API '{other}'. Available APIs: {}.", api_names().join(", "))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::action::parse_action;
    use crate::topology::AppName;

    fn setup() -> (Simulation, Workspace, tempfile::TempDir) {
        let mut sim = Simulation::new(AppName::SocialNetwork, 100.0, 1, 30);
        sim.advance_s(10);
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::create(&dir.path().join("ws")).unwrap();
        (sim, ws, dir)
    }

    fn run(sim: &mut Simulation, ws: &mut Workspace, action: &str) -> String {
        dispatch(sim, ws, &parse_action(action).unwrap())
    }

    #[test]
    fn docs_cover_every_api() {
        let docs = api_docs();
        for name in ["get_logs", "get_metrics", "get_traces", "exec_shell", "submit"] {
            assert!(docs.contains(&format!("{name}(")), "{name}");
        }
        assert!(docs.contains("duration: int = 5"));
        assert!(docs.contains("kubectl scale deployment"));
    }

    #[test]
    fn invalid_target_gives_verbatim_error() {
        let (mut sim, mut ws, _d) = setup();
        assert_eq!(run(&mut sim, &mut ws, r#"get_logs("test-social-network", "Social Network")"#), NO_SUCH_TARGET);
        assert_eq!(run(&mut sim, &mut ws, r#"get_metrics("nope", 10)"#), NO_SUCH_TARGET);
    }

    #[test]
    fn default_trace_duration_is_five_seconds() {
        let (mut sim, mut ws, _d) = setup();
        let path = run(&mut sim, &mut ws, r#"get_traces("test-social-network")"#);
        assert_eq!(path, "/arena/telemetry/traces/0001");
        let n = std::fs::read_dir(ws.resolve(&path).unwrap()).unwrap().count();
        assert_eq!(n, 500);
    }

    #[test]
    fn metrics_path_then_cat() {
        let (mut sim, mut ws, _d) = setup();
        let path = run(&mut sim, &mut ws, r#"get_metrics("test-social-network", 10)"#);
        let tsv = run(&mut sim, &mut ws, &format!(r#"exec_shell("cat {path}/metrics.tsv")"#));
        assert_eq!(tsv.lines().count(), 1 + 10 * 28 * 6);
    }

    #[test]
    fn bad_calls_become_observations() {
        let (mut sim, mut ws, _d) = setup();
        assert!(run(&mut sim, &mut ws, "frobnicate()").starts_with("Error: unknown API 'frobnicate'"));
        assert!(run(&mut sim, &mut ws, "get_logs()").starts_with("TypeError"));
        assert!(run(&mut sim, &mut ws, "get_logs(5)").starts_with("TypeError"));
        assert!(run(&mut sim, &mut ws, r#"get_metrics("test-social-network", 0)"#).contains("positive"));
        assert!(run(&mut sim, &mut ws, r#"exec_shell("rm -rf /")"#).starts_with("Permission denied"));
        assert!(run(&mut sim, &mut ws, r#"get_logs("a", x="b")"#).contains("unexpected keyword"));
    }
}
