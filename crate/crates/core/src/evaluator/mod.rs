//! Scoring of submitted solutions and aggregate reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::faultlib::{FaultType, Layer};
use crate::orchestrator::action::{parse_action, Call, Value};
use crate::orchestrator::shell::shell_verb;
use crate::orchestrator::SessionStatus;
use crate::problems::TaskKind;
use crate::topology::HealthVerdict;

/// Why a submission was not accepted at face value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Malformed,
    EmptyList,
    MissingField,
    UnknownLabel,
    NoSubmission,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskMetrics {
    Detection {
        ttd_s: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<Reason>,
    },
    Localization {
        ttl_s: f64,
        acc_at_1: bool,
        acc_at_3: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<Reason>,
    },
    Analysis {
        tta_s: f64,
        level_correct: bool,
        type_correct: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<Reason>,
    },
    Mitigation {
        ttm_s: f64,
        health: HealthVerdict,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<Reason>,
    },
}

impl TaskMetrics {
    pub fn time_s(&self) -> f64 {
        match self {
            TaskMetrics::Detection { ttd_s: t, .. }
            | TaskMetrics::Localization { ttl_s: t, .. }
            | TaskMetrics::Analysis { tta_s: t, .. }
            | TaskMetrics::Mitigation { ttm_s: t, .. } => *t,
        }
    }

    pub fn acc_at_3(&self) -> Option<bool> {
        match self {
            TaskMetrics::Localization { acc_at_3, .. } => Some(*acc_at_3),
            _ => None,
        }
    }
}

/// Scored outcome of one session. Wall time is kept out of the serialized
/// form so reports stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pid: String,
    pub agent_name: String,
    pub task: TaskKind,
    pub status: SessionStatus,
    pub success: bool,
    pub task_metrics: TaskMetrics,
    pub steps: u32,
    pub in_tokens: u64,
    pub out_tokens: u64,
    #[serde(skip)]
    pub wall_time_s: f64,
    pub trajectory_ref: String,
}

/// Result of grading one submission, before time and cost are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial {
    pub success: bool,
    pub metrics: TaskMetrics,
}

/// Detection: exactly "yes" or "no" after trimming and lowercasing.
pub fn eval_detection(submission: Option<&Call>, fault_present: bool, tt_s: f64) -> Partial {
    let answer = submission.and_then(|c| c.arg(0, "answer")).and_then(Value::as_str).map(|s| s.trim().to_ascii_lowercase());
    let (success, reason) = match (submission, answer.as_deref()) {
        (None, _) => (false, Some(Reason::NoSubmission)),
        (_, Some("yes")) => (fault_present, None),
        (_, Some("no")) => (!fault_present, None),
        _ => (false, Some(Reason::Malformed)),
    };
    Partial { success, metrics: TaskMetrics::Detection { ttd_s: tt_s, reason } }
}

/// Localization: first entry for acc@1, first three for acc@3.
pub fn eval_localization(submission: Option<&Call>, oracle: &[String], tt_s: f64) -> Partial {
    let fail = |reason| Partial {
        success: false,
        metrics: TaskMetrics::Localization { ttl_s: tt_s, acc_at_1: false, acc_at_3: false, reason: Some(reason) },
    };
    let Some(call) = submission else { return fail(Reason::NoSubmission) };
    let names: Vec<&str> = match call.arg(0, "services") {
        Some(Value::Str(s)) => vec![s.as_str()],
        Some(Value::List(items)) => match items.iter().map(Value::as_str).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => return fail(Reason::Malformed),
        },
        _ => return fail(Reason::Malformed),
    };
    if names.is_empty() {
        return fail(Reason::EmptyList);
    }
    let hit = |n: &&str| oracle.iter().any(|o| o == n.trim());
    let acc_at_1 = names.first().is_some_and(&hit);
    let acc_at_3 = names.iter().take(3).any(hit);
    Partial { success: acc_at_1, metrics: TaskMetrics::Localization { ttl_s: tt_s, acc_at_1, acc_at_3, reason: None } }
}

/// Root cause analysis: both labels must match.
pub fn eval_analysis(submission: Option<&Call>, level: Layer, fault_type: FaultType, tt_s: f64) -> Partial {
    let Some(call) = submission else {
        return Partial {
            success: false,
            metrics: TaskMetrics::Analysis {
                tta_s: tt_s,
                level_correct: false,
                type_correct: false,
                reason: Some(Reason::NoSubmission),
            },
        };
    };
    let label = |i, key| call.arg(i, key).and_then(Value::as_str).map(|s| s.trim().to_ascii_lowercase());
    let (l, t) = (label(0, "system_level"), label(1, "fault_type"));
    let mut reason = None;
    if l.is_none() || t.is_none() {
        reason = Some(Reason::MissingField);
    }
    let lp = l.as_deref().map(Layer::parse);
    let tp = t.as_deref().map(FaultType::parse);
    if matches!(lp, Some(None)) || matches!(tp, Some(None)) {
        reason = Some(Reason::UnknownLabel);
    }
    let level_correct = lp.flatten() == Some(level);
    let type_correct = tp.flatten() == Some(fault_type);
    Partial {
        success: level_correct && type_correct,
        metrics: TaskMetrics::Analysis { tta_s: tt_s, level_correct, type_correct, reason },
    }
}

/// Mitigation: the health verdict after the post-submit workload window.
pub fn eval_mitigation(submitted: bool, health: HealthVerdict, tt_s: f64) -> Partial {
    let success = submitted && health.healthy;
    let reason = (!submitted).then_some(Reason::NoSubmission);
    Partial { success, metrics: TaskMetrics::Mitigation { ttm_s: tt_s, health, reason } }
}

/// Accounting key of a raw action: the API name, with the shell verb for
/// `exec_shell` (e.g. "exec_shell/kubectl get"), or "invalid".
pub fn action_key(raw: &str) -> String {
    match parse_action(raw) {
        Ok(call) if call.name == "exec_shell" => match call.arg(0, "command").and_then(Value::as_str) {
            Some(cmd) => format!("exec_shell/{}", shell_verb(cmd)),
            None => "exec_shell".to_string(),
        },
        Ok(call) => call.name,
        Err(_) => "invalid".to_string(),
    }
}

/// One report with the raw actions of its trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub report: EvalReport,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: TaskKind,
    pub problems: usize,
    pub successes: usize,
    pub accuracy_pct: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_at_3_pct: Option<f64>,
    pub mean_time_s: f64,
    pub mean_steps: f64,
    pub mean_in_tokens: f64,
    pub mean_out_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub agent: String,
    pub total: usize,
    /// API name -> count.
    pub by_api: BTreeMap<String, usize>,
    /// Shell verb -> count, over `exec_shell` calls only.
    pub by_shell_verb: BTreeMap<String, usize>,
}

impl ActionDistribution {
    pub fn api_pct(&self, api: &str) -> f64 {
        pct(self.by_api.get(api).copied().unwrap_or(0), self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tasks: Vec<TaskSummary>,
    pub overall: TaskTotals,
    pub actions: Vec<ActionDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTotals {
    pub problems: usize,
    pub successes: usize,
    pub accuracy_pct: f64,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        (n as f64 * 10000.0 / d as f64).round() / 100.0
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64 * 100.0).round() / 100.0
    }
}

pub fn aggregate(entries: &[ReportEntry]) -> Summary {
    let mut tasks = Vec::new();
    for task in TaskKind::ALL {
        let rs: Vec<&EvalReport> = entries.iter().map(|e| &e.report).filter(|r| r.task == task).collect();
        if rs.is_empty() {
            continue;
        }
        let successes = rs.iter().filter(|r| r.success).count();
        let acc3 = (task == TaskKind::Localization)
            .then(|| pct(rs.iter().filter(|r| r.task_metrics.acc_at_3() == Some(true)).count(), rs.len()));
        tasks.push(TaskSummary {
            task,
            problems: rs.len(),
            successes,
            accuracy_pct: pct(successes, rs.len()),
            acc_at_3_pct: acc3,
            mean_time_s: mean(rs.iter().map(|r| r.task_metrics.time_s())),
            mean_steps: mean(rs.iter().map(|r| f64::from(r.steps))),
            mean_in_tokens: mean(rs.iter().map(|r| r.in_tokens as f64)),
            mean_out_tokens: mean(rs.iter().map(|r| r.out_tokens as f64)),
        });
    }
    let successes = entries.iter().filter(|e| e.report.success).count();
    let overall = TaskTotals { problems: entries.len(), successes, accuracy_pct: pct(successes, entries.len()) };

    let mut per_agent: BTreeMap<&str, ActionDistribution> = BTreeMap::new();
    for e in entries {
        let d = per_agent.entry(&e.report.agent_name).or_insert_with(|| ActionDistribution {
            agent: e.report.agent_name.clone(),
            total: 0,
            by_api: BTreeMap::new(),
            by_shell_verb: BTreeMap::new(),
        });
        for raw in &e.actions {
            let key = action_key(raw);
            d.total += 1;
            match key.split_once('/') {
                Some((api, verb)) => {
                    *d.by_api.entry(api.to_string()).or_default() += 1;
                    *d.by_shell_verb.entry(verb.to_string()).or_default() += 1;
                }
                None => *d.by_api.entry(key).or_default() += 1,
            }
        }
    }
    Summary { tasks, overall, actions: per_agent.into_values().collect() }
}

/// Left-aligned first column, right-aligned rest.
pub fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn render_summary(s: &Summary) -> String {
    let mut rows = vec![["task", "n", "acc%", "acc@3%", "time_s", "steps", "in_tok", "out_tok"].map(String::from).to_vec()];
    for t in &s.tasks {
        rows.push(vec![
            t.task.slug().to_string(),
            t.problems.to_string(),
            format!("{:.2}", t.accuracy_pct),
            t.acc_at_3_pct.map_or("-".to_string(), |v| format!("{v:.2}")),
            format!("{:.2}", t.mean_time_s),
            format!("{:.2}", t.mean_steps),
            format!("{:.2}", t.mean_in_tokens),
            format!("{:.2}", t.mean_out_tokens),
        ]);
    }
    rows.push(vec![
        "overall".into(),
        s.overall.problems.to_string(),
        format!("{:.2}", s.overall.accuracy_pct),
    ]);
    let mut out = render_table(&rows);
    for d in &s.actions {
        let _ = writeln!(out, "\nactions of {} ({} total)", d.agent, d.total);
        let mut rows = vec![vec!["api".to_string(), "count".into(), "pct".into()]];
        for (api, n) in &d.by_api {
            rows.push(vec![api.clone(), n.to_string(), format!("{:.2}", pct(*n, d.total))]);
        }
        out.push_str(&render_table(&rows));
        if !d.by_shell_verb.is_empty() {
            let shell_total: usize = d.by_shell_verb.values().sum();
            let mut rows = vec![vec!["shell verb".to_string(), "count".into(), "pct".into()]];
            for (verb, n) in &d.by_shell_verb {
                rows.push(vec![verb.clone(), n.to_string(), format!("{:.2}", pct(*n, shell_total))]);
            }
            out.push_str(&render_table(&rows));
        }
    }
    out
}

/// Accuracy at each step limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub max_steps: u32,
    pub problems: usize,
    pub successes: usize,
    pub accuracy_pct: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub agent: String,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_LIMITS: [u32; 4] = [5, 10, 15, 20];

/// Run `run(limit)` for each limit and tabulate accuracy.
pub fn sweep<E>(
    agent: &str,
    limits: &[u32],
    mut run: impl FnMut(u32) -> Result<Vec<EvalReport>, E>,
) -> Result<SweepTable, E> {
    let mut rows = Vec::new();
    for &limit in limits {
        let reports = run(limit)?;
        let successes = reports.iter().filter(|r| r.success).count();
        rows.push(SweepRow {
            max_steps: limit,
            problems: reports.len(),
            successes,
            accuracy_pct: pct(successes, reports.len()),
            mean_steps: mean(reports.iter().map(|r| f64::from(r.steps))),
        });
    }
    Ok(SweepTable { agent: agent.to_string(), rows })
}

impl SweepTable {
    pub fn render(&self) -> String {
        let mut rows = vec![["max_steps", "n", "successes", "acc%", "mean_steps"].map(String::from).to_vec()];
        for r in &self.rows {
            rows.push(vec![
                r.max_steps.to_string(),
                r.problems.to_string(),
                r.successes.to_string(),
                format!("{:.2}", r.accuracy_pct),
                format!("{:.2}", r.mean_steps),
            ]);
        }
        format!("step-limit sweep for {}\n{}", self.agent, render_table(&rows))
    }

    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].accuracy_pct >= w[0].accuracy_pct)
    }
}
