//! Built-in reference agents.
//!
//! `oracle` and `bad_fixer` read the hidden problem and only run when test
//! agents are allowed. The others see exactly what any agent sees.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::faultlib::FaultName;
use crate::orchestrator::{Agent, AgentError, AgentInit, AgentReply};
use crate::problems::{Problem, Solution, TaskKind};
use crate::telemetry::{read_metrics_tsv, MetricPoint};
use crate::topology::{app_topology, conn_config_map, ADMIN_ROLE, PASSWORD_KEY};

pub const BUILTIN_NAMES: [&str; 5] = ["oracle", "random", "always_yes", "k_sigma", "bad_fixer"];
pub const DEFAULT_K: f64 = 3.0;
/// Metrics window the k-sigma detector asks for.
pub const K_SIGMA_WINDOW_S: u64 = 600;

/// Build a built-in agent by name.
pub fn builtin_agent(name: &str, seed: u64) -> Option<Box<dyn Agent>> {
    Some(match name {
        "oracle" => Box::new(OracleAgent::new(false, seed)),
        "bad_fixer" => Box::new(OracleAgent::new(true, seed)),
        "random" => Box::new(RandomAgent::new(seed)),
        "always_yes" => Box::new(AlwaysYes),
        "k_sigma" | "k_sigma_detector" => Box::new(KSigmaAgent::new(DEFAULT_K)),
        _ => return None,
    })
}

fn quote(s: &str) -> String {
    format!("{s:?}")
}

fn shell(cmd: String) -> String {
    format!("exec_shell({})", quote(&cmd))
}

/// The namespace named in a problem description.
pub fn namespace_from(description: &str) -> Option<String> {
    let i = description.find("namespace ")? + "namespace ".len();
    let ns: String =
        description[i..].chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '-').collect();
    (!ns.is_empty()).then_some(ns)
}

fn task_from(instructions: &str) -> Option<TaskKind> {
    let rest = instructions.split("Task: ").nth(1)?;
    let word: String = rest.chars().take_while(|c| c.is_ascii_alphabetic() || *c == ' ').collect();
    match word.trim() {
        "detection" => Some(TaskKind::Detection),
        "localization" => Some(TaskKind::Localization),
        "root cause analysis" => Some(TaskKind::Analysis),
        "mitigation" => Some(TaskKind::Mitigation),
        _ => None,
    }
}

/// Minimal correct action sequence for a problem.
fn oracle_plan(p: &Problem) -> Vec<String> {
    let spec = p.fault();
    let ns = p.environment.app.namespace();
    match &p.solution {
        Solution::Detection { fault_present } => {
            vec![format!("submit({})", quote(if *fault_present { "yes" } else { "no" }))]
        }
        Solution::Localization { services } => {
            let list: Vec<String> = services.iter().map(|s| quote(s)).collect();
            vec![format!("submit([{}])", list.join(", "))]
        }
        Solution::Analysis { system_level, fault_type } => vec![format!(
            "submit(system_level={}, fault_type={})",
            quote(system_level.as_str()),
            quote(fault_type.as_str())
        )],
        Solution::Mitigation => {
            let topo = app_topology(p.environment.app);
            let mut plan = Vec::new();
            for t in &spec.targets {
                let svc = topo.service(t);
                match spec.name {
                    FaultName::AuthenticationMissing => {
                        plan.push(shell(format!(
                            "kubectl edit configmap {} set {PASSWORD_KEY}=restored-secret -n {ns}",
                            conn_config_map(t)
                        )));
                        for client in topo.services.iter().filter(|s| s.requires_auth.as_ref().is_some_and(|a| a.store == *t)) {
                            plan.push(shell(format!("kubectl rollout restart deployment {} -n {ns}", client.name)));
                        }
                    }
                    FaultName::TargetPortMisconfig => {
                        let port = svc.map_or(0, |s| s.container_port);
                        plan.push(shell(format!("kubectl patch service {t} -n {ns} --target-port={port}")));
                    }
                    FaultName::RevokeAuth | FaultName::UserUnregistered => {
                        let principals: BTreeSet<&str> = topo
                            .services
                            .iter()
                            .filter_map(|s| s.requires_auth.as_ref())
                            .filter(|a| a.store == *t)
                            .map(|a| a.principal.as_str())
                            .collect();
                        for pr in principals {
                            plan.push(shell(if spec.name == FaultName::RevokeAuth {
                                format!("mongo grant-role --store {t} --principal {pr} --role {ADMIN_ROLE}")
                            } else {
                                format!("mongo register-user --store {t} --user {pr}")
                            }));
                        }
                    }
                    FaultName::BuggyAppImage => {
                        let tag = svc.map_or(String::new(), |s| s.image_tag.clone());
                        plan.push(shell(format!("kubectl set image deployment {t} {tag} -n {ns}")));
                    }
                    FaultName::ScalePod => {
                        let n = svc.map_or(1, |s| s.desired_replicas);
                        plan.push(shell(format!("kubectl scale deployment {t} --replicas={n} -n {ns}")));
                    }
                    FaultName::AssignNonExistentNode => {
                        plan.push(shell(format!("kubectl patch deployment {t} -n {ns} --clear-node-selector")));
                    }
                    FaultName::PodFailure => {
                        plan.push(shell(format!("kubectl rollout restart deployment {t} -n {ns}")));
                    }
                    FaultName::NetworkLoss | FaultName::Noop => {}
                }
            }
            plan.push("submit()".to_string());
            plan
        }
    }
}

/// Replays the oracle plan. With `collateral`, it also scales a seeded
/// bystander to zero before submitting a mitigation.
pub struct OracleAgent {
    collateral: bool,
    seed: u64,
    plan: VecDeque<String>,
}

impl OracleAgent {
    pub fn new(collateral: bool, seed: u64) -> Self {
        Self { collateral, seed, plan: VecDeque::new() }
    }
}

impl Agent for OracleAgent {
    fn init(&mut self, _info: &AgentInit) -> Result<(), AgentError> {
        Ok(())
    }

    fn get_action(&mut self, _state: &str) -> Result<AgentReply, AgentError> {
        Ok(AgentReply::new(self.plan.pop_front().unwrap_or_else(|| "submit(\"oracle: no plan\")".to_string())))
    }

    fn needs_backdoor(&self) -> bool {
        true
    }

    fn attach_backdoor(&mut self, problem: &Problem) {
        let mut plan = oracle_plan(problem);
        if self.collateral && problem.task == TaskKind::Mitigation {
            let topo = app_topology(problem.environment.app);
            let targets = &problem.fault().targets;
            let bystanders: Vec<&str> =
                topo.services.iter().map(|s| s.name.as_str()).filter(|s| !targets.iter().any(|t| t == s)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            if let Some(b) = bystanders.choose(&mut rng) {
                let ns = problem.environment.app.namespace();
                plan.insert(plan.len() - 1, shell(format!("kubectl scale deployment {b} --replicas=0 -n {ns}")));
            }
        }
        self.plan = plan.into();
    }
}

/// Answers "yes" on the first step, whatever the task.
pub struct AlwaysYes;

impl Agent for AlwaysYes {
    fn init(&mut self, _info: &AgentInit) -> Result<(), AgentError> {
        Ok(())
    }

    fn get_action(&mut self, _state: &str) -> Result<AgentReply, AgentError> {
        Ok(AgentReply::new("submit(\"yes\")"))
    }
}

/// Uniform over the documented APIs with plausible arguments.
pub struct RandomAgent {
    rng: ChaCha8Rng,
    seed: u64,
    namespace: String,
    task: Option<TaskKind>,
    layers: Vec<String>,
    fault_types: Vec<String>,
    services: BTreeSet<String>,
}

const RANDOM_APIS: [&str; 5] = ["get_logs", "get_metrics", "get_traces", "exec_shell", "submit"];

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            namespace: "default".into(),
            task: None,
            layers: Vec::new(),
            fault_types: Vec::new(),
            services: BTreeSet::new(),
        }
    }

    fn learn(&mut self, state: &str) {
        let mut lines = state.lines();
        if lines.next().is_some_and(|h| h.starts_with("NAME") && h.contains("CLUSTER-IP")) {
            for l in lines {
                if let Some(name) = l.split_whitespace().next() {
                    self.services.insert(name.to_string());
                }
            }
        }
    }

    fn pick_service(&mut self) -> Option<String> {
        let v: Vec<&String> = self.services.iter().collect();
        v.choose(&mut self.rng).map(|s| s.to_string())
    }

    fn submit(&mut self) -> String {
        match self.task {
            Some(TaskKind::Detection) | None => {
                format!("submit({})", quote(if self.rng.gen_bool(0.5) { "yes" } else { "no" }))
            }
            Some(TaskKind::Localization) => {
                let mut v: Vec<&String> = self.services.iter().collect();
                v.shuffle(&mut self.rng);
                let n = self.rng.gen_range(1..=3);
                let picks: Vec<String> = v.into_iter().take(n).map(|s| quote(s)).collect();
                if picks.is_empty() {
                    "submit([\"frontend\"])".to_string()
                } else {
                    format!("submit([{}])", picks.join(", "))
                }
            }
            Some(TaskKind::Analysis) => {
                let l = self.layers.choose(&mut self.rng).cloned().unwrap_or_default();
                let t = self.fault_types.choose(&mut self.rng).cloned().unwrap_or_default();
                format!("submit(system_level={}, fault_type={})", quote(&l), quote(&t))
            }
            Some(TaskKind::Mitigation) => "submit()".to_string(),
        }
    }
}

fn vocab_line(instructions: &str, key: &str) -> Vec<String> {
    instructions
        .lines()
        .find_map(|l| l.trim().strip_prefix(key))
        .map(|rest| rest.split('|').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default()
}

impl Agent for RandomAgent {
    fn init(&mut self, info: &AgentInit) -> Result<(), AgentError> {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.namespace = namespace_from(&info.description).unwrap_or_else(|| "default".into());
        self.task = task_from(&info.instructions);
        self.layers = vocab_line(&info.instructions, "system_level:");
        self.fault_types = vocab_line(&info.instructions, "fault_type:");
        self.services.clear();
        Ok(())
    }

    fn get_action(&mut self, state: &str) -> Result<AgentReply, AgentError> {
        self.learn(state);
        let ns = self.namespace.clone();
        let api = *RANDOM_APIS.choose(&mut self.rng).expect("non-empty");
        let action = match api {
            "get_logs" => match self.pick_service().filter(|_| self.rng.gen_bool(0.5)) {
                Some(s) => format!("get_logs({}, {})", quote(&ns), quote(&s)),
                None => format!("get_logs({})", quote(&ns)),
            },
            "get_metrics" => format!("get_metrics({}, {})", quote(&ns), self.rng.gen_range(10..=120)),
            "get_traces" => format!("get_traces({}, {})", quote(&ns), self.rng.gen_range(1..=10)),
            "exec_shell" => {
                let kind = ["pods", "services", "deployments"].choose(&mut self.rng).expect("non-empty");
                match self.pick_service().filter(|_| self.rng.gen_bool(0.3)) {
                    Some(s) => shell(format!("kubectl describe service {s} -n {ns}")),
                    None => shell(format!("kubectl get {kind} -n {ns}")),
                }
            }
            _ => self.submit(),
        };
        Ok(AgentReply::new(action))
    }
}

/// Flags an anomaly if any service's latest error rate exceeds
/// mean + k·σ of all error-rate points in the window.
pub fn k_sigma_detect(points: &[MetricPoint], k: f64) -> bool {
    let errs: Vec<&MetricPoint> = points.iter().filter(|p| p.metric == "error_rate").collect();
    let Some(latest) = errs.iter().map(|p| p.t).max() else { return false };
    let n = errs.len() as f64;
    let mean = errs.iter().map(|p| p.value).sum::<f64>() / n;
    let var = errs.iter().map(|p| (p.value - mean).powi(2)).sum::<f64>() / n;
    let threshold = mean + k * var.sqrt();
    errs.iter().filter(|p| p.t == latest).any(|p| p.value > threshold)
}

/// get_metrics, read the TSV, decide.
pub struct KSigmaAgent {
    k: f64,
    namespace: String,
    step: u32,
    metrics_dir: Option<String>,
}

impl KSigmaAgent {
    pub fn new(k: f64) -> Self {
        Self { k, namespace: String::new(), step: 0, metrics_dir: None }
    }
}

impl Agent for KSigmaAgent {
    fn init(&mut self, info: &AgentInit) -> Result<(), AgentError> {
        self.namespace = namespace_from(&info.description).unwrap_or_default();
        self.step = 0;
        self.metrics_dir = None;
        Ok(())
    }

    fn get_action(&mut self, state: &str) -> Result<AgentReply, AgentError> {
        self.step += 1;
        let action = match self.step {
            1 => format!("get_metrics({}, {K_SIGMA_WINDOW_S})", quote(&self.namespace)),
            2 if state.starts_with('/') => {
                let dir = state.trim().to_string();
                self.metrics_dir = Some(dir.clone());
                shell(format!("cat {dir}/metrics.tsv"))
            }
            3 if state.starts_with("t_s\t") => {
                let verdict = k_sigma_detect(&read_metrics_tsv(state), self.k);
                format!("submit({})", quote(if verdict { "yes" } else { "no" }))
            }
            _ => "submit(\"k_sigma: no metrics\")".to_string(),
        };
        Ok(AgentReply::new(action))
    }
}
