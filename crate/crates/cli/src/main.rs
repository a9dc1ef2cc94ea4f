//! `arena` command line: list problems, run sessions, export telemetry and
//! aggregate reports.

mod config;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use arena_core::baselines::{builtin_agent, BUILTIN_NAMES};
use arena_core::evaluator::{self, EvalReport, ReportEntry, SWEEP_LIMITS};
use arena_core::orchestrator::{
    Agent, ExecAgent, HumanAgent, LoadedTrajectory, Orchestrator, OrchestratorConfig, SessionStatus,
    ALLOW_TEST_AGENTS_ENV, DEFAULT_MAX_STEPS, DEFAULT_STEP_TIMEOUT, MAX_STEPS_LIMIT,
};
use arena_core::problems::{ProblemFilter, ProblemPool};
use arena_core::simkernel::DEFAULT_STEP_STRIDE_S;

use config::{parse_filter, FileConfig};

#[derive(Parser)]
#[command(name = "arena", version, about = "Evaluate AIOps agents on a simulated cluster")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List problems in the pool.
    List {
        /// Comma-separated key=value terms over task, app and fault.
        #[arg(long)]
        filter: Option<String>,
        /// Emit the catalog as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run one agent on one problem; exits 0 iff the session succeeds.
    Run {
        #[arg(long)]
        pid: String,
        /// builtin:<name>, exec:<command line>, or human.
        #[arg(long)]
        agent: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run the workload on a problem with no agent and export telemetry.
    Export {
        #[arg(long)]
        pid: String,
        /// Sim-seconds of workload after the fault is injected.
        #[arg(long, default_value_t = 60)]
        duration: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Include the fault schedule in the manifest.
        #[arg(long)]
        unredacted: bool,
    },
    /// Aggregate session reports, or run a step-limit sweep.
    Report {
        /// Glob of report.json files to aggregate.
        #[arg(long, required_unless_present = "sweep")]
        reports: Option<String>,
        /// Sweep mode: rerun --agent over the filtered pool at each step limit.
        #[arg(long)]
        sweep: bool,
        #[arg(long, requires = "sweep")]
        agent: Option<String>,
        #[arg(long)]
        filter: Option<String>,
        /// Comma-separated step limits for sweep mode.
        #[arg(long, value_delimiter = ',')]
        limits: Option<Vec<u32>>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    max_steps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sim-seconds advanced per step.
    #[arg(long)]
    step_stride: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow agents that read the hidden problem (oracle, bad_fixer).
    #[arg(long)]
    allow_test_agents: bool,
}

/// Flags over config file over defaults.
struct Settings {
    seed: u64,
    step_stride: u64,
    max_steps: u32,
    out: Option<PathBuf>,
    allow_test_agents: bool,
    step_timeout: Duration,
}

impl Settings {
    fn resolve(common: &Common, file: &FileConfig) -> Result<Self> {
        let env_allow = std::env::var(ALLOW_TEST_AGENTS_ENV).is_ok_and(|v| matches!(v.as_str(), "1" | "true" | "yes"));
        let s = Self {
            seed: common.seed.or(file.seed).unwrap_or(0),
            step_stride: common.step_stride.or(file.step_stride).unwrap_or(DEFAULT_STEP_STRIDE_S),
            max_steps: common.max_steps.or(file.max_steps).unwrap_or(DEFAULT_MAX_STEPS),
            out: common.out.clone().or_else(|| file.out.clone()),
            allow_test_agents: common.allow_test_agents || file.allow_test_agents.unwrap_or(false) || env_allow,
            step_timeout: file.step_timeout_s.map_or(DEFAULT_STEP_TIMEOUT, Duration::from_secs),
        };
        if s.max_steps > MAX_STEPS_LIMIT {
            bail!("--max-steps must be at most {MAX_STEPS_LIMIT}");
        }
        if s.step_stride == 0 {
            bail!("--step-stride must be positive");
        }
        Ok(s)
    }

    fn orchestrator_config(&self, out_dir: Option<PathBuf>) -> OrchestratorConfig {
        OrchestratorConfig {
            seed: self.seed,
            step_stride_s: self.step_stride,
            allow_test_agents: self.allow_test_agents,
            out_dir,
            workspace_root: None,
            step_timeout: self.step_timeout,
        }
    }
}

fn make_agent(spec: &str, seed: u64, timeout: Duration) -> Result<Box<dyn Agent>> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin_agent(name, seed)
            .ok_or_else(|| anyhow!("unknown builtin agent `{name}` (known: {})", BUILTIN_NAMES.join(", ")));
    }
    if let Some(cmd) = spec.strip_prefix("exec:") {
        return Ok(Box::new(ExecAgent::new(cmd, timeout)?));
    }
    if spec == "human" {
        return Ok(Box::new(HumanAgent::new(io::stdin().lock(), io::stdout())));
    }
    bail!("agent must be builtin:<name>, exec:<command line> or human, got `{spec}`")
}

fn agent_label(spec: &str) -> String {
    match spec.split_once(':') {
        Some(("exec", _)) => "exec".to_string(),
        Some((_, name)) => name.to_string(),
        None => spec.to_string(),
    }
}

fn cmd_list(filter: Option<&str>, json: bool) -> Result<ExitCode> {
    let pool = ProblemPool::stock();
    let filter = filter.map(parse_filter).transpose()?.unwrap_or_default();
    let rows = pool.list_problems(&filter);
    if json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(ExitCode::SUCCESS);
    }
    let mut table = vec![["pid", "app", "fault", "level", "task"].map(String::from).to_vec()];
    for m in &rows {
        table.push(vec![
            m.pid.clone(),
            m.app.to_string(),
            format!("{} {}", m.fault_no, m.fault),
            m.level.to_string(),
            m.task.slug().to_string(),
        ]);
    }
    print!("{}", evaluator::render_table(&table));
    println!("{} problems", rows.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(pid: &str, agent_spec: &str, settings: &Settings) -> Result<ExitCode> {
    let out = settings.out.clone().unwrap_or_else(|| PathBuf::from("arena-runs").join(pid));
    let mut orch = Orchestrator::new(settings.orchestrator_config(Some(out)));
    let name = agent_label(agent_spec);
    let agent = make_agent(agent_spec, settings.seed, settings.step_timeout)?;
    orch.register_agent(agent, &name)?;
    orch.init_problem(pid)?;
    let outcome = orch.start_problem(&name, settings.max_steps)?;
    let r = &outcome.report;
    println!(
        "{}: status={} success={} steps={} time={}s tokens={}/{}",
        r.pid,
        r.status.as_str(),
        r.success,
        r.steps,
        r.task_metrics.time_s(),
        r.in_tokens,
        r.out_tokens
    );
    if let Some(p) = &outcome.trajectory_path {
        println!("trajectory: {}", p.display());
    }
    if let Some(p) = &outcome.report_path {
        println!("report: {}", p.display());
    }
    if outcome.session.status == SessionStatus::Aborted {
        eprintln!("session aborted: {}", outcome.session.abort_reason.as_deref().unwrap_or("unknown reason"));
        return Ok(ExitCode::from(2));
    }
    Ok(if r.success { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_export(pid: &str, duration: u64, out: &Path, seed: u64, unredacted: bool) -> Result<ExitCode> {
    let config = OrchestratorConfig { seed, ..OrchestratorConfig::default() };
    let mut orch = Orchestrator::new(config);
    orch.init_problem(pid)?;
    orch.advance_active(duration)?;
    let digest = orch.export_active(out, !unredacted).with_context(|| format!("exporting to {}", out.display()))?;
    orch.close_problem();
    println!("exported {} to {}", pid, out.display());
    println!("sha256: {digest}");
    Ok(ExitCode::SUCCESS)
}

fn load_entries(pattern: &str) -> Result<Vec<ReportEntry>> {
    let mut entries = Vec::new();
    let mut paths: Vec<PathBuf> = glob::glob(pattern)?.collect::<Result<_, _>>()?;
    paths.sort();
    for p in paths {
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let report: EvalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        let traj = p.parent().unwrap_or(Path::new(".")).join(&report.trajectory_ref);
        let actions = match LoadedTrajectory::load(&traj) {
            Ok(t) => t.actions(),
            Err(e) => {
                eprintln!("warning: no trajectory for {}: {e}", p.display());
                Vec::new()
            }
        };
        entries.push(ReportEntry { report, actions });
    }
    if entries.is_empty() {
        bail!("no reports match `{pattern}`");
    }
    Ok(entries)
}

fn write_out(out: Option<&Path>, name: &str, json: String) -> Result<()> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let p = dir.join(name);
        fs::write(&p, json + "\n")?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_report(
    reports: Option<&str>,
    sweep: bool,
    agent: Option<&str>,
    filter: Option<&str>,
    limits: Option<&[u32]>,
    settings: &Settings,
) -> Result<ExitCode> {
    if !sweep {
        let entries = load_entries(reports.expect("clap requires --reports without --sweep"))?;
        let summary = evaluator::aggregate(&entries);
        print!("{}", evaluator::render_summary(&summary));
        write_out(settings.out.as_deref(), "summary.json", serde_json::to_string_pretty(&summary)?)?;
        return Ok(ExitCode::SUCCESS);
    }
    let spec = agent.ok_or_else(|| anyhow!("--sweep needs --agent"))?;
    let pool = ProblemPool::stock();
    let filter = filter.map(parse_filter).transpose()?.unwrap_or_else(ProblemFilter::default);
    let pids: Vec<String> = pool.list_problems(&filter).into_iter().map(|m| m.pid).collect();
    if pids.is_empty() {
        bail!("filter matches no problems");
    }
    let limits = limits.unwrap_or(&SWEEP_LIMITS);
    if let Some(l) = limits.iter().find(|l| **l > MAX_STEPS_LIMIT) {
        bail!("step limit {l} exceeds {MAX_STEPS_LIMIT}");
    }
    let name = agent_label(spec);
    let config = settings.orchestrator_config(None);
    let table = evaluator::sweep(&name, limits, |limit| -> Result<Vec<EvalReport>> {
        let mut reports = Vec::new();
        for pid in &pids {
            let agent = make_agent(spec, settings.seed, settings.step_timeout)?;
            let mut orch = Orchestrator::with_pool(config.clone(), pool.clone());
            orch.register_agent(agent, &name)?;
            orch.init_problem(pid)?;
            reports.push(orch.start_problem(&name, limit)?.report);
        }
        Ok(reports)
    })?;
    print!("{}", table.render());
    write_out(settings.out.as_deref(), "sweep.json", serde_json::to_string_pretty(&table)?)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = FileConfig::load_from_env()?;
    match cli.cmd {
        Cmd::List { filter, json } => cmd_list(filter.as_deref(), json),
        Cmd::Run { pid, agent, common } => cmd_run(&pid, &agent, &Settings::resolve(&common, &file)?),
        Cmd::Export { pid, duration, out, seed, unredacted } => {
            cmd_export(&pid, duration, &out, seed.or(file.seed).unwrap_or(0), unredacted)
        }
        Cmd::Report { reports, sweep, agent, filter, limits, common } => cmd_report(
            reports.as_deref(),
            sweep,
            agent.as_deref(),
            filter.as_deref(),
            limits.as_deref(),
            &Settings::resolve(&common, &file)?,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
