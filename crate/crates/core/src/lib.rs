//! A deterministic arena for evaluating AIOps agents.
//!
//! The arena deploys simulated microservice applications onto an in-memory
//! cluster, injects faults from a fixed library, drives open-loop workload
//! through the service graph, and exposes an agent-cloud interface (ACI) for
//! agents to observe telemetry and act on the cluster. Sessions are scored on
//! detection, localization, root-cause analysis and mitigation tasks.
//!
//! Module map:
//! - [`topology`]: application graphs, mutable cluster state, health checks
//! - [`simkernel`]: virtual clock, workload generation, request simulation
//! - [`faultlib`]: the fault catalog with inject/recover semantics
//! - [`telemetry`]: log/metric/trace store, ACI queries, offline export
//! - [`problems`]: the problem registry and agent-facing task text
//! - [`orchestrator`]: sessions, action parsing, ACI dispatch, wire protocol
//! - [`evaluator`]: per-task scoring and aggregate reports
//! - [`baselines`]: built-in reference agents

pub mod baselines;
pub mod evaluator;
pub mod faultlib;
pub mod orchestrator;
pub mod problems;
pub mod simkernel;
pub mod telemetry;
pub mod topology;

pub use orchestrator::{Orchestrator, OrchestratorConfig};
pub use problems::{ProblemPool, TaskKind};
pub use topology::{load_app, AppName, ClusterState};
