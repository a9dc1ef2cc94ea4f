//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines are never captured: `cargo test -p arena-core --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::time::{Duration, Instant};

use arena_core::baselines::{builtin_agent, k_sigma_detect, DEFAULT_K, K_SIGMA_WINDOW_S};
use arena_core::evaluator::{sweep, EvalReport, TaskMetrics, SWEEP_LIMITS};
use arena_core::faultlib::{inject, recover, FaultName, FaultSpec};
use arena_core::orchestrator::{
    run_problem, Orchestrator, OrchestratorConfig, OrchestratorError, ScriptedAgent, DEFAULT_MAX_STEPS, REPORT_FILE,
    TRAJECTORY_FILE,
};
use arena_core::problems::{stock_targets, ProblemFilter, ProblemPool, TaskKind};
use arena_core::simkernel::{RequestStatus, Simulation, DEFAULT_STEP_STRIDE_S};
use arena_core::telemetry::read_metrics_tsv;
use arena_core::topology::health_check;
use arena_core::AppName;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn cfg(seed: u64) -> OrchestratorConfig {
    OrchestratorConfig { seed, allow_test_agents: true, ..OrchestratorConfig::default() }
}

fn run_all(pool: &ProblemPool, agent: &str, seed: u64, max_steps: u32, task: Option<TaskKind>) -> Vec<EvalReport> {
    pool.iter()
        .filter(|p| task.is_none_or(|t| p.task == t))
        .map(|p| {
            let a = builtin_agent(agent, seed).unwrap();
            run_problem(&cfg(seed), pool, &p.pid, a, agent, max_steps).unwrap().report
        })
        .collect()
}

fn problem_pool_fidelity() -> Check {
    let t0 = Instant::now();
    let pool = ProblemPool::stock();
    let mut counts = Vec::new();
    for f in FaultName::ALL {
        let filter = ProblemFilter { fault: Some(f), ..ProblemFilter::default() };
        counts.push(pool.list_problems(&filter).len());
    }
    let total = pool.list_problems(&ProblemFilter::default()).len();
    let elapsed = t0.elapsed();
    if counts != [4, 12, 8, 8, 4, 4, 4, 2, 2, 2] || total != 50 {
        return Err(format!("counts {counts:?} total {total}"));
    }
    let f2 = pool.iter().filter(|p| p.fault().name == FaultName::TargetPortMisconfig);
    let mut grid: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for p in f2 {
        if p.fault().app != AppName::SocialNetwork {
            return Err(format!("{} not on SocialNetwork", p.pid));
        }
        grid.entry(p.fault().targets.join(",")).or_default().push(p.task.level());
    }
    let want: Vec<&str> = vec!["post-storage-service", "text-service", "user-service"];
    if grid.keys().map(String::as_str).collect::<Vec<_>>() != want || grid.values().any(|l| l.len() != 4) {
        return Err(format!("target-port grid {grid:?}"));
    }
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("{counts:?} total 50 in {elapsed:?}"))
}

fn oracle_sweep() -> Check {
    let t0 = Instant::now();
    let pool = ProblemPool::stock();
    let reports = run_all(&pool, "oracle", 1, DEFAULT_MAX_STEPS, None);
    let elapsed = t0.elapsed();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.success).map(|r| r.pid.as_str()).collect();
    if reports.len() != 50 || !failed.is_empty() {
        return Err(format!("{} ran, failed: {failed:?}", reports.len()));
    }
    if elapsed >= Duration::from_secs(300) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("50/50 in {elapsed:.2?}"))
}

fn false_positive_machinery() -> Check {
    let pool = ProblemPool::stock();
    let mut wrong = Vec::new();
    let mut n = 0;
    for p in pool.iter().filter(|p| p.task == TaskKind::Detection) {
        let a = builtin_agent("always_yes", 0).unwrap();
        let r = run_problem(&cfg(2), &pool, &p.pid, a, "always_yes", DEFAULT_MAX_STEPS).unwrap().report;
        n += 1;
        if r.success != (p.fault().name != FaultName::Noop) {
            wrong.push(p.pid.clone());
        }
    }
    if wrong.is_empty() {
        Ok(format!("{} of {n} detection problems solved, both noop failed", n - 2))
    } else {
        Err(format!("unexpected outcome on {wrong:?}"))
    }
}

fn side_effect_penalty() -> Check {
    let pool = ProblemPool::stock();
    let mut n = 0;
    for p in pool.iter().filter(|p| p.task == TaskKind::Mitigation) {
        let a = builtin_agent("bad_fixer", 3).unwrap();
        let out = run_problem(&cfg(3), &pool, &p.pid, a, "bad_fixer", DEFAULT_MAX_STEPS).unwrap();
        let TaskMetrics::Mitigation { health, .. } = &out.report.task_metrics else {
            return Err(format!("{}: not a mitigation report", p.pid));
        };
        if out.report.success || health.healthy {
            return Err(format!("{} passed the health check", p.pid));
        }
        if p.fault().targets.iter().any(|t| health.names_service(t)) {
            return Err(format!("{}: target still unhealthy {:?}", p.pid, health.violations));
        }
        n += 1;
    }
    Ok(format!("{n}/{n} mitigations failed on a bystander violation only"))
}

fn inject_recover_inverse() -> Check {
    let mut cells = 0;
    let mut failures = Vec::new();
    for f in FaultName::ALL.into_iter().filter(|f| *f != FaultName::Noop) {
        for (app, target) in stock_targets(f) {
            let mut sim = Simulation::new(app, 10.0, 5, DEFAULT_STEP_STRIDE_S);
            sim.advance_s(120);
            let rec = inject(&mut sim.state, &FaultSpec::new(f, app, &[target])).map_err(|e| e.to_string())?;
            sim.advance_s(60);
            recover(&mut sim.state, &rec).map_err(|e| e.to_string())?;
            sim.advance_s(60);
            let verdict = health_check(&sim.state, &sim.telemetry, 60);
            cells += 1;
            if !verdict.healthy {
                failures.push(format!("{f:?}/{target}: {:?}", verdict.violations));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{cells} cells healthy"))
    } else {
        Err(failures.join("; "))
    }
}

fn determinism() -> Check {
    let pool = ProblemPool::stock();
    let pids: Vec<String> = pool.iter().step_by(7).map(|p| p.pid.clone()).collect();
    for pid in &pids {
        let mut artifacts = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let config = OrchestratorConfig { seed: 11, out_dir: Some(dir.path().to_path_buf()), ..cfg(11) };
            run_problem(&config, &pool, pid, builtin_agent("random", 11).unwrap(), "random", DEFAULT_MAX_STEPS)
                .map_err(|e| e.to_string())?;
            let traj = fs::read(dir.path().join(TRAJECTORY_FILE)).map_err(|e| e.to_string())?;
            let report = fs::read(dir.path().join(REPORT_FILE)).map_err(|e| e.to_string())?;

            let mut orch = Orchestrator::with_pool(cfg(11), pool.clone());
            orch.init_problem(pid).map_err(|e| e.to_string())?;
            orch.advance_active(90).map_err(|e| e.to_string())?;
            let export = orch.export_active(&dir.path().join("export"), true).map_err(|e| e.to_string())?;
            artifacts.push((sha(&traj), sha(&report), export));
        }
        if artifacts[0] != artifacts[1] {
            return Err(format!("{pid}: {:?} vs {:?}", artifacts[0], artifacts[1]));
        }
    }
    Ok(format!("{} problems hash-identical across two runs", pids.len()))
}

fn sha(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

fn metric_semantics() -> Check {
    let pool = ProblemPool::stock();
    let det = pool.iter().find(|p| p.task == TaskKind::Detection && p.fault().name == FaultName::PodFailure).unwrap();
    for stride in [DEFAULT_STEP_STRIDE_S, 15] {
        for k in [1, 5, DEFAULT_MAX_STEPS] {
            let mut actions = vec!["get_logs(\"test-hotel-reservation\", \"frontend\")".to_string(); k as usize - 1];
            actions.push("submit(\"Yes\")".into());
            let config = OrchestratorConfig { step_stride_s: stride, ..cfg(4) };
            let out = run_problem(&config, &pool, &det.pid, Box::new(ScriptedAgent::new(actions, "submit()")), "s", k)
                .map_err(|e: OrchestratorError| e.to_string())?;
            let r = &out.report;
            let want = (k as u64 * stride) as f64;
            if r.steps != k || r.task_metrics.time_s() != want || !r.success {
                return Err(format!("k={k} stride={stride}: steps {} time {}", r.steps, r.task_metrics.time_s()));
            }
        }
    }

    let loc = pool.iter().find(|p| p.pid == "k8s_target_port_misconfig_social_net-localization-1").unwrap();
    let names = ["user-service", "text-service", "media-service", "url-shorten-service"];
    let mut hits = [0u32; 2];
    let mut n = 0;
    for perm in permutations(&names) {
        for len in 1..=names.len() {
            let list: Vec<String> = perm[..len].iter().map(|s| format!("\"{s}\"")).collect();
            let action = format!("submit([{}])", list.join(", "));
            let out = run_problem(&cfg(4), &pool, &loc.pid, Box::new(ScriptedAgent::new([action], "submit()")), "s", 1)
                .map_err(|e| e.to_string())?;
            let TaskMetrics::Localization { acc_at_1, acc_at_3, .. } = out.report.task_metrics else {
                return Err("not a localization report".into());
            };
            if acc_at_1 && !acc_at_3 {
                return Err(format!("acc@1 without acc@3 on {perm:?}"));
            }
            let pos = perm[..len].iter().position(|s| *s == "user-service");
            if acc_at_1 != (pos == Some(0)) || acc_at_3 != pos.is_some_and(|i| i < 3) {
                return Err(format!("wrong accuracy for {:?}", &perm[..len]));
            }
            hits[0] += acc_at_1 as u32;
            hits[1] += acc_at_3 as u32;
            n += 1;
        }
    }
    Ok(format!("TT=k*stride for k in 1,5,{DEFAULT_MAX_STEPS}; acc@1 {}/{n} <= acc@3 {}/{n}", hits[0], hits[1]))
}

fn permutations<'a>(items: &[&'a str]) -> Vec<Vec<&'a str>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn network_loss_statistics() -> Check {
    let app = AppName::HotelReservation;
    let mut sim = Simulation::new(app, 100.0, 42, DEFAULT_STEP_STRIDE_S);
    let spec = FaultSpec::new(FaultName::NetworkLoss, app, &["user"]);
    let p = spec.loss_rate();
    inject(&mut sim.state, &spec).map_err(|e| e.to_string())?;
    let (mut reached, mut lost) = (0u64, 0u64);
    while reached < 10_000 {
        for o in sim.advance_s(30) {
            if o.path.iter().any(|(_, callee)| callee == "user") {
                reached += 1;
                if matches!(&o.status, RequestStatus::Error { failing_service, .. } if failing_service == "user") {
                    lost += 1;
                }
            }
        }
    }
    let frac = lost as f64 / reached as f64;
    if (frac - p).abs() <= 0.02 {
        Ok(format!("{lost}/{reached} = {frac:.4} vs p={p}"))
    } else {
        Err(format!("{lost}/{reached} = {frac:.4} vs p={p}"))
    }
}

fn k_sigma_on_exports() -> Check {
    let pool = ProblemPool::stock();
    let mut n = 0;
    for p in pool.iter().filter(|p| p.task == TaskKind::Detection) {
        let f = p.fault().name;
        if !matches!(f, FaultName::PodFailure | FaultName::NetworkLoss | FaultName::Noop) {
            continue;
        }
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut orch = Orchestrator::with_pool(cfg(6), pool.clone());
        orch.init_problem(&p.pid).map_err(|e| e.to_string())?;
        orch.advance_active(DEFAULT_STEP_STRIDE_S).map_err(|e| e.to_string())?;
        orch.export_active(dir.path(), true).map_err(|e| e.to_string())?;
        let tsv = fs::read_to_string(dir.path().join("metrics.tsv")).map_err(|e| e.to_string())?;
        let points = read_metrics_tsv(&tsv);
        let end = points.iter().map(|p| p.t).max().unwrap_or(0);
        let window: Vec<_> = points.into_iter().filter(|p| p.t + K_SIGMA_WINDOW_S > end).collect();
        let flagged = k_sigma_detect(&window, DEFAULT_K);
        if flagged != (f != FaultName::Noop) {
            return Err(format!("{}: flagged={flagged}", p.pid));
        }
        n += 1;
    }
    Ok(format!("{n} exported datasets classified correctly at k={DEFAULT_K}"))
}

fn step_limit_sweep() -> Check {
    let pool = ProblemPool::stock();
    let oracle = sweep("oracle", &SWEEP_LIMITS, |limit| Ok::<_, String>(run_all(&pool, "oracle", 1, limit, None)))?;
    if !oracle.is_monotone() || oracle.rows.len() != SWEEP_LIMITS.len() {
        return Err(format!("oracle table not monotone:\n{}", oracle.render()));
    }
    if oracle.rows.iter().any(|r| r.problems == 0 || r.accuracy_pct != 100.0) {
        return Err(format!("oracle below 100%:\n{}", oracle.render()));
    }
    let random = sweep("random", &SWEEP_LIMITS, |limit| Ok::<_, String>(run_all(&pool, "random", 9, limit, None)))?;
    let rendered = random.render();
    let lines = rendered.lines().filter(|l| !l.trim().is_empty()).count();
    if random.rows.len() != SWEEP_LIMITS.len() || lines != SWEEP_LIMITS.len() + 2 {
        return Err(format!("malformed random table:\n{rendered}"));
    }
    let limits: Vec<u32> = random.rows.iter().map(|r| r.max_steps).collect();
    if limits != SWEEP_LIMITS {
        return Err(format!("limits {limits:?}"));
    }
    Ok(format!("oracle monotone at 100%, random table has {} rows", random.rows.len()))
}

fn main() {
    let checks: [Criterion; 10] = [
        ("problem-pool fidelity", problem_pool_fidelity),
        ("oracle sweep", oracle_sweep),
        ("false-positive machinery", false_positive_machinery),
        ("side-effect penalty", side_effect_penalty),
        ("inject/recover inverse", inject_recover_inverse),
        ("determinism", determinism),
        ("metric semantics", metric_semantics),
        ("network-loss statistics", network_loss_statistics),
        ("k-sigma detector", k_sigma_on_exports),
        ("step-limit sweep harness", step_limit_sweep),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        let t0 = Instant::now();
        match check() {
            Ok(detail) => println!("PASS {name}: {detail} [{:.1?}]", t0.elapsed()),
            Err(why) => {
                println!("FAIL {name}: {why} [{:.1?}]", t0.elapsed());
                failed.push(name);
            }
        }
    }
    println!("acceptance: {} passed, {} failed", checks.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
