use std::path::Path;
use std::process::{Command, Output};

fn arena(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arena"))
        .args(args)
        .env_remove("ARENA_CONFIG")
        .env_remove("ARENA_ALLOW_TEST_AGENTS")
        .output()
        .expect("spawn arena")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_shows_whole_pool() {
    let o = arena(&["list"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("50 problems"));

    let o = arena(&["list", "--json", "--filter", "task=detection"]);
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 15);

    assert!(!arena(&["list", "--filter", "colour=red"]).status.success());
}

#[test]
fn oracle_run_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = arena(&[
        "run",
        "--pid",
        "misconfig_app_hotel_res-mitigation-1",
        "--agent",
        "builtin:oracle",
        "--allow-test-agents",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("report.json") && s.contains("trajectory.jsonl"));
    for f in ["report.json", "trajectory.jsonl", "timing.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn test_agents_refused_without_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let o = arena(&[
        "run",
        "--pid",
        "misconfig_app_hotel_res-mitigation-1",
        "--agent",
        "builtin:oracle",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert_ne!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("benchmark mode"));
}

#[test]
fn zero_step_budget_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = arena(&[
        "run",
        "--pid",
        "noop_hotel_res-detection-1",
        "--agent",
        "builtin:always_yes",
        "--max-steps",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn write_stub(dir: &Path, body: &str) -> String {
    let p = dir.join("agent.sh");
    std::fs::write(&p, body).unwrap();
    format!("exec:sh {}", p.display())
}

#[test]
fn exec_agent_over_stdio() {
    let dir = tempfile::tempdir().unwrap();
    let agent = write_stub(
        dir.path(),
        r#"read hello
echo '{"type":"hello","protocol_version":1,"name":"stub"}'
read init
read state
echo '{"type":"action","action":"submit(\"No\")"}'
read result
"#,
    );
    let out = dir.path().join("run");
    let o = arena(&["run", "--pid", "noop_hotel_res-detection-1", "--agent", &agent, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exec_agent_with_wrong_version_is_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let agent = write_stub(dir.path(), "read hello\necho '{\"type\":\"hello\",\"protocol_version\":99}'\n");
    let o = arena(&["run", "--pid", "noop_hotel_res-detection-1", "--agent", &agent, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert_ne!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn report_aggregates_runs() {
    let dir = tempfile::tempdir().unwrap();
    for pid in ["noop_hotel_res-detection-1", "pod_failure_hotel_res-detection-1"] {
        let out = dir.path().join(pid);
        arena(&["run", "--pid", pid, "--agent", "builtin:always_yes", "--out", out.to_str().unwrap()]);
    }
    let pattern = format!("{}/*/report.json", dir.path().display());
    let summary_dir = dir.path().join("summary");
    let o = arena(&["report", "--reports", &pattern, "--out", summary_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("detection") && s.contains("50.00"), "{s}");
    assert!(summary_dir.join("summary.json").exists());
}

#[test]
fn sweep_prints_one_row_per_limit() {
    let o = arena(&[
        "report",
        "--sweep",
        "--agent",
        "builtin:always_yes",
        "--filter",
        "task=detection,app=hotel_res",
        "--limits",
        "5,10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.trim_start().starts_with('5')), "{s}");
    assert!(s.lines().any(|l| l.trim_start().starts_with("10")), "{s}");
}

#[test]
fn export_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let o = arena(&["export", "--pid", "network_loss_hotel_res-detection-1", "--duration", "120", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "metrics.tsv", "logs.jsonl", "SHA256"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(!manifest.contains("fault_schedule"), "redacted export leaks the schedule");
}
