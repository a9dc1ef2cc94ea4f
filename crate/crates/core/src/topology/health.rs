use serde::{Deserialize, Serialize};

use super::{ClusterState, PodPhase};
use crate::telemetry::TelemetryStore;

/// Highest tolerated end-to-end request error rate for a healthy system.
pub const ERROR_RATE_THRESHOLD: f64 = 0.01;
/// Trailing window the error rate is measured over.
pub const HEALTH_WINDOW_S: u64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum ViolationKind {
    /// Fewer Running pods than the deploy-time replica count.
    ReplicasMissing { running: u32, expected: u32 },
    PodNotRunning { pod: String, phase: PodPhase },
    ErrorRate { rate: f64, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub service: String,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthVerdict {
    pub healthy: bool,
    pub violations: Vec<Violation>,
}

impl HealthVerdict {
    pub fn names_service(&self, service: &str) -> bool {
        self.violations.iter().any(|v| v.service == service)
    }
}

/// Whole-system health: every service has at least its deploy-time number
/// of Running pods, no pod is stuck outside Running, and the end-to-end
/// request error rate over the trailing window is within threshold.
pub fn health_check(state: &ClusterState, telemetry: &TelemetryStore, window_s: u64) -> HealthVerdict {
    let ns = state.namespace().to_string();
    let mut violations = Vec::new();
    for name in state.service_order() {
        let expected = state.deploy_replicas(&ns, name).unwrap_or(0);
        let running = state.running_pods(&ns, name) as u32;
        if running < expected {
            violations.push(Violation {
                service: name.clone(),
                kind: ViolationKind::ReplicasMissing { running, expected },
            });
        }
        for pod in state.pods_of(&ns, name) {
            if pod.phase != PodPhase::Running {
                violations.push(Violation {
                    service: name.clone(),
                    kind: ViolationKind::PodNotRunning { pod: pod.pod_name.clone(), phase: pod.phase },
                });
            }
        }
    }
    let end = telemetry.horizon_ms();
    let start = end.saturating_sub(window_s * 1000);
    if let Some(rate) = telemetry.request_error_rate(start, end) {
        if rate > ERROR_RATE_THRESHOLD {
            violations.push(Violation {
                service: state.entry_service().to_string(),
                kind: ViolationKind::ErrorRate { rate, threshold: ERROR_RATE_THRESHOLD },
            });
        }
    }
    HealthVerdict { healthy: violations.is_empty(), violations }
}
