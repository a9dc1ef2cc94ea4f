use arena_core::baselines::builtin_agent;
use arena_core::faultlib::FaultName;
use arena_core::orchestrator::{run_problem, OrchestratorConfig, SessionStatus};
use arena_core::problems::{ProblemPool, TaskKind};

fn test_config(seed: u64) -> OrchestratorConfig {
    OrchestratorConfig { seed, allow_test_agents: true, ..OrchestratorConfig::default() }
}

#[test]
fn oracle_solves_every_problem() {
    let pool = ProblemPool::stock();
    let mut failures = Vec::new();
    for p in pool.iter() {
        let out = run_problem(&test_config(1), &pool, &p.pid, builtin_agent("oracle", 1).unwrap(), "oracle", 10).unwrap();
        if !out.report.success {
            failures.push(format!("{}: {:?}", p.pid, out.report.task_metrics));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn always_yes_false_positives_only_on_noop() {
    let pool = ProblemPool::stock();
    for p in pool.iter().filter(|p| p.task == TaskKind::Detection) {
        let out = run_problem(&test_config(2), &pool, &p.pid, builtin_agent("always_yes", 0).unwrap(), "always_yes", 10)
            .unwrap();
        assert_eq!(out.report.success, p.fault().name != FaultName::Noop, "{}", p.pid);
    }
}

#[test]
fn bad_fixer_fails_every_mitigation() {
    let pool = ProblemPool::stock();
    for p in pool.iter().filter(|p| p.task == TaskKind::Mitigation) {
        let out =
            run_problem(&test_config(3), &pool, &p.pid, builtin_agent("bad_fixer", 3).unwrap(), "bad_fixer", 10).unwrap();
        assert_eq!(out.session.status, SessionStatus::Submitted);
        assert!(!out.report.success, "{}", p.pid);
    }
}

#[test]
fn k_sigma_on_symptomatic_and_noop_detection() {
    let pool = ProblemPool::stock();
    for p in pool.iter().filter(|p| p.task == TaskKind::Detection) {
        let f = p.fault().name;
        if !matches!(f, FaultName::PodFailure | FaultName::NetworkLoss | FaultName::Noop) {
            continue;
        }
        let out = run_problem(&test_config(4), &pool, &p.pid, builtin_agent("k_sigma", 0).unwrap(), "k_sigma", 10).unwrap();
        assert!(out.report.success, "{} {:?}", p.pid, out.session.trajectory.last().unwrap().action);
    }
}
