//! Problem registry.
//!
//! A problem is a task, a hidden environment (app, fault, workload), the
//! information shown to the agent, and the oracle solution. The stock pool
//! expands every fault of the catalog over its task levels and injection
//! targets.
//!
//! Problem ids read `<fault_slug>_<app_slug>-<task_slug>-<index>`, where the
//! index is the 1-based position of the injection target, for example
//! `misconfig_app_hotel_res-mitigation-1`.

mod text;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::faultlib::{Extensibility, FaultName, FaultSpec, FaultType, Layer};
use crate::simkernel::WorkloadSpec;
use crate::topology::{app_topology, AppName};

pub use text::{app_description, instructions_for};

/// Stock workload rate (requests per second).
pub const DEFAULT_RATE: f64 = 10.0;
/// Healthy run time before the fault lands, so telemetry has a baseline.
pub const DEFAULT_INJECT_AT_S: u64 = 300;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error("information for '{pid}' leaks its answer '{needle}'")]
    Leak { pid: String, needle: String },
    #[error("unknown task '{0}'")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Detection,
    Localization,
    Analysis,
    Mitigation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Detection, TaskKind::Localization, TaskKind::Analysis, TaskKind::Mitigation];

    pub fn level(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_level(level: u8) -> Option<Self> {
        Self::ALL.get(usize::from(level).checked_sub(1)?).copied()
    }

    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::Detection => "detection",
            TaskKind::Localization => "localization",
            TaskKind::Analysis => "analysis",
            TaskKind::Mitigation => "mitigation",
        }
    }

    /// Analysis is graded on two subtasks.
    pub fn subtasks(self) -> &'static [&'static str] {
        match self {
            TaskKind::Analysis => &["system_level", "fault_type"],
            _ => &[],
        }
    }

    /// Short label for the time metric reported by this task.
    pub fn time_metric(self) -> &'static str {
        match self {
            TaskKind::Detection => "TTD",
            TaskKind::Localization => "TTL",
            TaskKind::Analysis => "TTA",
            TaskKind::Mitigation => "TTM",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for TaskKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if let Ok(n) = s.parse::<u8>() {
            return Self::from_level(n).ok_or(ProblemError::UnknownTask(s));
        }
        match s.as_str() {
            "rca" | "root_cause_analysis" => return Ok(TaskKind::Analysis),
            _ => {}
        }
        Self::ALL.into_iter().find(|t| t.slug() == s).ok_or(ProblemError::UnknownTask(s))
    }
}

/// The hidden part of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub app: AppName,
    pub fault: FaultSpec,
    pub workload: WorkloadSpec,
    pub inject_at_s: u64,
}

/// What the agent is shown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Information {
    pub description: String,
    pub instructions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Solution {
    Detection { fault_present: bool },
    Localization { services: BTreeSet<String> },
    Analysis { system_level: Layer, fault_type: FaultType },
    /// Graded by the health check rather than by an answer.
    Mitigation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub pid: String,
    pub task: TaskKind,
    pub environment: Environment,
    pub information: Information,
    pub solution: Solution,
}

impl Problem {
    pub fn fault(&self) -> &FaultSpec {
        &self.environment.fault
    }

    pub fn meta(&self) -> ProblemMeta {
        let f = self.fault();
        ProblemMeta {
            pid: self.pid.clone(),
            app: self.environment.app,
            fault_no: f.fault_no,
            fault: f.name,
            level: self.task.level(),
            task: self.task,
            extensibility: f.extensibility,
        }
    }
}

/// Public catalog row; carries no oracle or target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub pid: String,
    pub app: AppName,
    pub fault_no: u8,
    pub fault: FaultName,
    pub level: u8,
    pub task: TaskKind,
    pub extensibility: Extensibility,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemFilter {
    pub task: Option<TaskKind>,
    pub app: Option<AppName>,
    pub fault: Option<FaultName>,
}

impl ProblemFilter {
    fn matches(&self, p: &Problem) -> bool {
        self.task.is_none_or(|t| t == p.task)
            && self.app.is_none_or(|a| a == p.environment.app)
            && self.fault.is_none_or(|f| f == p.fault().name)
    }
}

/// Stock injection targets per fault.
pub fn stock_targets(fault: FaultName) -> Vec<(AppName, &'static str)> {
    use AppName::*;
    match fault {
        FaultName::AuthenticationMissing => vec![(HotelReservation, "mongodb-profile")],
        FaultName::TargetPortMisconfig => vec![
            (SocialNetwork, "user-service"),
            (SocialNetwork, "text-service"),
            (SocialNetwork, "post-storage-service"),
        ],
        FaultName::RevokeAuth | FaultName::UserUnregistered => {
            vec![(HotelReservation, "mongodb-geo"), (HotelReservation, "mongodb-rate")]
        }
        FaultName::BuggyAppImage => vec![(HotelReservation, "geo")],
        FaultName::ScalePod | FaultName::AssignNonExistentNode => vec![(SocialNetwork, "user-service")],
        FaultName::NetworkLoss | FaultName::PodFailure => vec![(HotelReservation, "user")],
        FaultName::Noop => vec![],
    }
}

fn solution_for(task: TaskKind, spec: &FaultSpec) -> Solution {
    match task {
        TaskKind::Detection => Solution::Detection { fault_present: spec.name != FaultName::Noop },
        TaskKind::Localization => Solution::Localization { services: spec.targets.iter().cloned().collect() },
        TaskKind::Analysis => {
            let (system_level, fault_type) =
                spec.name.root_cause().expect("analysis problems exist only for functional faults");
            Solution::Analysis { system_level, fault_type }
        }
        TaskKind::Mitigation => Solution::Mitigation,
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '_'
}

/// True if `needle` occurs in `hay` as a whole identifier.
fn mentions(hay: &str, needle: &str) -> bool {
    hay.match_indices(needle).any(|(i, _)| {
        let before = hay[..i].chars().next_back().is_none_or(|c| !is_ident_char(c));
        let after = hay[i + needle.len()..].chars().next().is_none_or(|c| !is_ident_char(c));
        before && after
    })
}

/// Fail if the agent-facing text names the answer. The published answer
/// vocabulary is exempt.
fn leak_check(p: &Problem) -> Result<(), ProblemError> {
    let needles: Vec<String> = match &p.solution {
        Solution::Localization { services } => services.iter().cloned().collect(),
        Solution::Analysis { system_level, fault_type } => {
            vec![system_level.as_str().to_string(), fault_type.as_str().to_string()]
        }
        _ => p.fault().targets.clone(),
    };
    let text = format!("{}\n{}", p.information.description, text::strip_vocabulary(&p.information.instructions));
    let mut needles = needles;
    needles.push(p.fault().name.as_str().to_string());
    needles.push(p.fault().name.slug().to_string());
    for n in needles {
        if mentions(&text, &n) {
            return Err(ProblemError::Leak { pid: p.pid.clone(), needle: n });
        }
    }
    Ok(())
}

/// Immutable, ordered set of problems.
#[derive(Debug, Clone)]
pub struct ProblemPool {
    problems: Vec<Problem>,
}

impl ProblemPool {
    /// The stock pool.
    pub fn stock() -> Self {
        Self::build(DEFAULT_RATE, DEFAULT_INJECT_AT_S).expect("stock pool passes its own checks")
    }

    pub fn build(rate: f64, inject_at_s: u64) -> Result<Self, ProblemError> {
        let mut problems = Vec::new();
        for fault in FaultName::ALL {
            let instances: Vec<(AppName, Vec<&str>)> = if fault == FaultName::Noop {
                AppName::ALL.iter().map(|a| (*a, vec![])).collect()
            } else {
                stock_targets(fault).into_iter().map(|(a, t)| (a, vec![t])).collect()
            };
            for &level in fault.supported_levels() {
                let task = TaskKind::from_level(level).expect("levels are 1..=4");
                let mut per_app = std::collections::BTreeMap::<AppName, usize>::new();
                for (app, targets) in &instances {
                    let index = per_app.entry(*app).or_default();
                    *index += 1;
                    let spec = FaultSpec::new(fault, *app, targets);
                    let entry = app_topology(*app).entry_service().name.clone();
                    let pid = format!("{}_{}-{}-{}", fault.slug(), app.slug(), task.slug(), index);
                    let problem = Problem {
                        pid,
                        task,
                        information: Information {
                            description: app_description(*app),
                            instructions: instructions_for(task),
                        },
                        solution: solution_for(task, &spec),
                        environment: Environment {
                            app: *app,
                            fault: spec,
                            workload: WorkloadSpec { rate, duration_s: 0, entry, seed: 0 },
                            inject_at_s,
                        },
                    };
                    leak_check(&problem)?;
                    problems.push(problem);
                }
            }
        }
        Ok(Self { problems })
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Problem> {
        self.problems.iter()
    }

    pub fn get(&self, pid: &str) -> Result<&Problem, ProblemError> {
        self.problems.iter().find(|p| p.pid == pid).ok_or_else(|| ProblemError::UnknownProblem(pid.to_string()))
    }

    /// Matching problems ordered by (fault, level, app, index).
    pub fn list_problems(&self, filter: &ProblemFilter) -> Vec<ProblemMeta> {
        self.problems.iter().filter(|p| filter.matches(p)).map(Problem::meta).collect()
    }

    pub fn catalog_json(&self) -> String {
        serde_json::to_string_pretty(&self.list_problems(&ProblemFilter::default())).expect("catalog serializes")
    }
}
