//! Session lifecycle: deploys a problem, polls an agent for actions,
//! dispatches them through the ACI and records the trajectory.

pub mod aci;
pub mod action;
pub mod agent;
pub mod protocol;
pub mod shell;
pub mod workspace;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{self, EvalReport, Partial};
use crate::faultlib::{inject, FaultError};
use crate::problems::{Problem, ProblemError, ProblemPool, Solution, TaskKind};
use crate::simkernel::{start_workload, SimError, Simulation, WorkloadSpec, DEFAULT_STEP_STRIDE_S};
use crate::telemetry::{export_offline, ExportManifest};
use crate::topology::{health_check, load_app, HEALTH_WINDOW_S};

pub use aci::{api_docs, dispatch, ACI_APIS};
pub use action::{parse_action, Call, ParseError, Value};
pub use agent::{Agent, AgentError, AgentInit, AgentReply, ExecAgent, HumanAgent, ScriptedAgent, SessionResult};
pub use agent::DEFAULT_STEP_TIMEOUT;
pub use protocol::{AgentMessage, ArenaMessage, ProtocolError, TokenCount, PROTOCOL_VERSION};
pub use workspace::Workspace;

pub const DEFAULT_MAX_STEPS: u32 = 10;
/// Upper bound accepted for `max_steps`.
pub const MAX_STEPS_LIMIT: u32 = 30;
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";
/// Environment flag that unlocks test-only agents.
pub const ALLOW_TEST_AGENTS_ENV: &str = "ARENA_ALLOW_TEST_AGENTS";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("an agent named '{0}' is already registered")]
    DuplicateName(String),
    #[error("no agent named '{0}' is registered")]
    UnknownAgent(String),
    #[error("a problem is already active; finish its session first")]
    SessionActive,
    #[error("no problem has been initialized")]
    NoProblem,
    #[error("max_steps must be at most {MAX_STEPS_LIMIT}, got {0}")]
    TooManySteps(u32),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("agent handshake failed: {0}")]
    Handshake(AgentError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrchestratorConfig {
    /// Workload seed.
    pub seed: u64,
    pub step_stride_s: u64,
    /// Unlock agents that read the hidden problem.
    pub allow_test_agents: bool,
    /// Where session artifacts go; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Scratch space behind `/arena/telemetry`; a fresh temp dir when `None`.
    pub workspace_root: Option<PathBuf>,
    pub step_timeout: Duration,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            step_stride_s: DEFAULT_STEP_STRIDE_S,
            allow_test_agents: false,
            out_dir: None,
            workspace_root: None,
            step_timeout: DEFAULT_STEP_TIMEOUT,
        }
    }
}

impl OrchestratorConfig {
    /// Defaults, with test agents unlocked if the environment flag is set.
    pub fn from_env() -> Self {
        let allow = std::env::var(ALLOW_TEST_AGENTS_ENV).is_ok_and(|v| matches!(v.as_str(), "1" | "true" | "yes"));
        Self { allow_test_agents: allow, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    Submitted,
    StepLimitReached,
    Aborted,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Running => "running",
            SessionStatus::Submitted => "submitted",
            SessionStatus::StepLimitReached => "step_limit_reached",
            SessionStatus::Aborted => "aborted",
        }
    }
}

/// One persisted line of the trajectory, after the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub action: String,
    /// Parsed API name, or `None` if the action did not parse.
    pub api: Option<String>,
    pub observation: String,
    pub sim_time_s: f64,
    pub in_tokens: u64,
    pub out_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub pid: String,
    pub agent: String,
    pub seed: u64,
    pub max_steps: u32,
    pub step_stride_s: u64,
    pub protocol_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TrajectoryLine {
    Header(SessionHeader),
    Step(StepRecord),
    End { status: SessionStatus, #[serde(skip_serializing_if = "Option::is_none")] abort_reason: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub header: SessionHeader,
    pub trajectory: Vec<StepRecord>,
    pub status: SessionStatus,
    pub abort_reason: Option<String>,
    pub in_tokens: u64,
    pub out_tokens: u64,
    pub wall_time_s: f64,
    /// The accepted `submit(...)` call, if any.
    pub submission: Option<Call>,
}

impl Session {
    pub fn steps(&self) -> u32 {
        self.trajectory.len() as u32
    }

    pub fn trajectory_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |l: &TrajectoryLine| {
            out.push_str(&serde_json::to_string(l).expect("trajectory serializes"));
            out.push('\n');
        };
        push(&TrajectoryLine::Header(self.header.clone()));
        for s in &self.trajectory {
            push(&TrajectoryLine::Step(s.clone()));
        }
        push(&TrajectoryLine::End { status: self.status, abort_reason: self.abort_reason.clone() });
        out
    }
}

/// A persisted trajectory read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrajectory {
    pub header: SessionHeader,
    pub steps: Vec<StepRecord>,
    pub status: Option<SessionStatus>,
}

impl LoadedTrajectory {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut status = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: TrajectoryLine = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            match rec {
                TrajectoryLine::Header(h) if header.is_none() => header = Some(h),
                TrajectoryLine::Header(_) => return Err(format!("line {}: second header", i + 1)),
                TrajectoryLine::Step(s) => steps.push(s),
                TrajectoryLine::End { status: s, .. } => status = Some(s),
            }
        }
        Ok(Self { header: header.ok_or("missing header")?, steps, status })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn actions(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.action.clone()).collect()
    }
}

/// Everything a finished session produced.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub session: Session,
    pub report: EvalReport,
    /// Files written, when an output directory is configured.
    pub trajectory_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
}

struct ActiveProblem {
    problem: Problem,
    sim: Simulation,
    inject_ms: u64,
    workspace: Workspace,
    init: AgentInit,
}

fn tokens(chars: usize) -> u64 {
    chars.div_ceil(4) as u64
}

static WORKSPACE_SEQ: AtomicU64 = AtomicU64::new(0);

fn temp_workspace() -> PathBuf {
    let n = WORKSPACE_SEQ.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("arena-ws-{}-{n}", std::process::id()))
}

pub struct Orchestrator {
    config: OrchestratorConfig,
    pool: ProblemPool,
    agents: BTreeMap<String, Box<dyn Agent>>,
    active: Option<ActiveProblem>,
}

impl Orchestrator {
    pub fn new(config: OrchestratorConfig) -> Self {
        Self::with_pool(config, ProblemPool::stock())
    }

    pub fn with_pool(config: OrchestratorConfig, pool: ProblemPool) -> Self {
        Self { config, pool, agents: BTreeMap::new(), active: None }
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn pool(&self) -> &ProblemPool {
        &self.pool
    }

    pub fn register_agent(&mut self, mut agent: Box<dyn Agent>, name: &str) -> Result<(), OrchestratorError> {
        if self.agents.contains_key(name) {
            return Err(OrchestratorError::DuplicateName(name.to_string()));
        }
        agent.connect().map_err(OrchestratorError::Handshake)?;
        self.agents.insert(name.to_string(), agent);
        Ok(())
    }

    pub fn unregister_agent(&mut self, name: &str) -> Option<Box<dyn Agent>> {
        self.agents.remove(name)
    }

    /// Deploy the problem's app, warm it up, inject the fault and return
    /// the information shown to the agent.
    pub fn init_problem(&mut self, pid: &str) -> Result<AgentInit, OrchestratorError> {
        if self.active.is_some() {
            return Err(OrchestratorError::SessionActive);
        }
        let problem = self.pool.get(pid)?.clone();
        let env = &problem.environment;
        let state = load_app(env.app);
        let spec = WorkloadSpec { seed: self.config.seed, ..env.workload.clone() };
        let workload = start_workload(&state, &spec)?;
        let mut sim = Simulation::with_workload(state, workload, self.config.step_stride_s);
        sim.advance_s(env.inject_at_s);
        inject(&mut sim.state, &env.fault)?;
        let inject_ms = sim.now_ms();
        let root = self.config.workspace_root.clone().unwrap_or_else(temp_workspace);
        let workspace = Workspace::create(&root)?;
        let init = AgentInit {
            description: problem.information.description.clone(),
            instructions: problem.information.instructions.clone(),
            api_docs: api_docs(),
        };
        self.active = Some(ActiveProblem { problem, sim, inject_ms, workspace, init: init.clone() });
        Ok(init)
    }

    /// Drop the active problem without running a session.
    pub fn close_problem(&mut self) {
        if let Some(a) = self.active.take() {
            let _ = fs::remove_dir_all(a.workspace.root());
        }
    }

    pub fn active_simulation(&self) -> Option<&Simulation> {
        self.active.as_ref().map(|a| &a.sim)
    }

    /// Let the workload run on the active problem with no agent attached.
    pub fn advance_active(&mut self, secs: u64) -> Result<(), OrchestratorError> {
        let a = self.active.as_mut().ok_or(OrchestratorError::NoProblem)?;
        a.sim.advance_s(secs);
        Ok(())
    }

    /// Run the registered agent on the initialized problem, then evaluate.
    pub fn start_problem(&mut self, agent_name: &str, max_steps: u32) -> Result<SessionOutcome, OrchestratorError> {
        if max_steps > MAX_STEPS_LIMIT {
            return Err(OrchestratorError::TooManySteps(max_steps));
        }
        if !self.agents.contains_key(agent_name) {
            return Err(OrchestratorError::UnknownAgent(agent_name.to_string()));
        }
        let mut active = self.active.take().ok_or(OrchestratorError::NoProblem)?;
        let agent = self.agents.get_mut(agent_name).expect("checked above");
        let header = SessionHeader {
            pid: active.problem.pid.clone(),
            agent: agent_name.to_string(),
            seed: self.config.seed,
            max_steps,
            step_stride_s: self.config.step_stride_s,
            protocol_version: PROTOCOL_VERSION,
        };
        let wall = Instant::now();
        let mut session = run_session(agent.as_mut(), &mut active, header, self.config.allow_test_agents);
        session.wall_time_s = wall.elapsed().as_secs_f64();

        let mut trajectory_path = None;
        if let Some(dir) = &self.config.out_dir {
            fs::create_dir_all(dir)?;
            let p = dir.join(TRAJECTORY_FILE);
            fs::write(&p, session.trajectory_jsonl())?;
            trajectory_path = Some(p);
        }

        let report = evaluate(&active.problem, &session, &mut active.sim, active.inject_ms);
        agent.finish(&SessionResult {
            status: session.status.as_str().to_string(),
            success: report.success,
            steps: session.steps(),
        });

        let mut report_path = None;
        if let Some(dir) = &self.config.out_dir {
            let p = dir.join(REPORT_FILE);
            fs::write(&p, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
            let timing = serde_json::json!({ "wall_time_s": session.wall_time_s });
            fs::write(dir.join(TIMING_FILE), serde_json::to_string_pretty(&timing).expect("json") + "\n")?;
            report_path = Some(p);
        }
        let _ = fs::remove_dir_all(active.workspace.root());
        Ok(SessionOutcome { session, report, trajectory_path, report_path })
    }

    /// Export the whole telemetry of the active problem.
    pub fn export_active(&self, dir: &Path, redact: bool) -> io::Result<String> {
        let a = self.active.as_ref().ok_or_else(|| io::Error::other("no active problem"))?;
        let schedule = (!redact).then(|| {
            let mut s = crate::faultlib::schedule::FaultSchedule::new(a.problem.environment.app);
            s.push(&a.problem.environment.fault, a.problem.environment.inject_at_s);
            s.to_toml()
        });
        export_offline(&a.sim.telemetry, dir, &a.problem.pid, self.config.seed, schedule)
    }
}

fn abort(session: &mut Session, reason: String) {
    session.status = SessionStatus::Aborted;
    session.abort_reason = Some(reason);
}

fn run_session(agent: &mut dyn Agent, active: &mut ActiveProblem, header: SessionHeader, allow_test: bool) -> Session {
    let mut session = Session {
        header,
        trajectory: Vec::new(),
        status: SessionStatus::Running,
        abort_reason: None,
        in_tokens: 0,
        out_tokens: 0,
        wall_time_s: 0.0,
        submission: None,
    };
    if agent.needs_backdoor() {
        if !allow_test {
            abort(
                &mut session,
                format!("test-only agent refused in benchmark mode (set {ALLOW_TEST_AGENTS_ENV}=1 or --allow-test-agents)"),
            );
            return session;
        }
        agent.attach_backdoor(&active.problem);
    }
    if let Err(e) = agent.init(&active.init) {
        abort(&mut session, format!("agent init failed: {e}"));
        return session;
    }
    let mut state = active.init.render();
    for step in 1..=session.header.max_steps {
        let reply = match agent.get_action(&state) {
            Ok(r) => r,
            Err(e) => {
                abort(&mut session, e.to_string());
                break;
            }
        };
        let (tin, tout) = match reply.tokens {
            Some(t) => (t.input, t.output),
            None => (tokens(state.chars().count()), tokens(reply.action.chars().count())),
        };
        session.in_tokens += tin;
        session.out_tokens += tout;
        active.sim.step();
        let parsed = parse_action(&reply.action);
        let api = parsed.as_ref().ok().map(|c| c.name.clone());
        let mut submitted = false;
        let observation = match parsed {
            Err(e) => format!(
                "Error: {e}\nSend exactly one API call, for example get_logs(\"<namespace>\", \"<service>\")."
            ),
            Ok(call) if call.name == "submit" => {
                session.submission = Some(call);
                submitted = true;
                "Submission received.".to_string()
            }
            Ok(call) => dispatch(&mut active.sim, &mut active.workspace, &call),
        };
        session.trajectory.push(StepRecord {
            step,
            action: reply.action,
            api,
            observation: observation.clone(),
            sim_time_s: (active.sim.now_ms() - active.inject_ms) as f64 / 1000.0,
            in_tokens: tin,
            out_tokens: tout,
        });
        if submitted {
            session.status = SessionStatus::Submitted;
            break;
        }
        state = observation;
    }
    if session.status == SessionStatus::Running {
        session.status = SessionStatus::StepLimitReached;
    }
    session
}

/// Grade a finished session. Mitigation runs the post-submit workload on `sim`.
pub fn evaluate(problem: &Problem, session: &Session, sim: &mut Simulation, inject_ms: u64) -> EvalReport {
    let tt_s = (sim.now_ms() - inject_ms) as f64 / 1000.0;
    let sub = session.submission.as_ref();
    let Partial { success, metrics } = match &problem.solution {
        Solution::Detection { fault_present } => evaluator::eval_detection(sub, *fault_present, tt_s),
        Solution::Localization { services } => {
            let oracle: Vec<String> = services.iter().cloned().collect();
            evaluator::eval_localization(sub, &oracle, tt_s)
        }
        Solution::Analysis { system_level, fault_type } => {
            evaluator::eval_analysis(sub, *system_level, *fault_type, tt_s)
        }
        Solution::Mitigation => {
            sim.advance_s(HEALTH_WINDOW_S);
            let health = health_check(&sim.state, &sim.telemetry, HEALTH_WINDOW_S);
            evaluator::eval_mitigation(sub.is_some(), health, tt_s)
        }
    };
    EvalReport {
        pid: problem.pid.clone(),
        agent_name: session.header.agent.clone(),
        task: problem.task,
        status: session.status,
        success: success && session.status == SessionStatus::Submitted,
        task_metrics: metrics,
        steps: session.steps(),
        in_tokens: session.in_tokens,
        out_tokens: session.out_tokens,
        wall_time_s: session.wall_time_s,
        trajectory_ref: TRAJECTORY_FILE.to_string(),
    }
}

/// Convenience: one fresh orchestrator, one agent, one problem.
pub fn run_problem(
    config: &OrchestratorConfig,
    pool: &ProblemPool,
    pid: &str,
    agent: Box<dyn Agent>,
    agent_name: &str,
    max_steps: u32,
) -> Result<SessionOutcome, OrchestratorError> {
    let mut orch = Orchestrator::with_pool(config.clone(), pool.clone());
    orch.register_agent(agent, agent_name)?;
    orch.init_problem(pid)?;
    orch.start_problem(agent_name, max_steps)
}

/// Re-run a persisted trajectory and return the fresh session.
pub fn replay(
    config: &OrchestratorConfig,
    pool: &ProblemPool,
    trajectory: &LoadedTrajectory,
) -> Result<SessionOutcome, OrchestratorError> {
    let h = &trajectory.header;
    let config = OrchestratorConfig { seed: h.seed, step_stride_s: h.step_stride_s, out_dir: None, ..config.clone() };
    // The scripted replayer never runs out because the step count matches.
    let agent = ScriptedAgent::new(trajectory.actions(), "submit()");
    run_problem(&config, pool, &h.pid, Box::new(agent), &h.agent, h.max_steps)
}

/// Manifest of an offline export, for callers that want to inspect it.
pub fn read_manifest(dir: &Path) -> io::Result<ExportManifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(io::Error::other)
}

/// Task kinds present in a pool, in level order.
pub fn tasks_in(pool: &ProblemPool) -> Vec<TaskKind> {
    let mut t: Vec<TaskKind> = pool.iter().map(|p| p.task).collect();
    t.sort_by_key(|k| k.level());
    t.dedup();
    t
}
