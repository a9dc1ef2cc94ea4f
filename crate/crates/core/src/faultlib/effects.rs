use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{FaultName, FaultSpec, BUGGY_IMAGE_TAGS};
use crate::topology::{ClusterState, PodPhase, ADMIN_ROLE, PASSWORD_KEY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthFailure {
    /// The client connected without credentials.
    MissingCredentials,
    /// The principal is not a registered user of the store.
    UserNotFound,
    /// The principal lacks the role needed to query.
    NotAuthorized,
}

/// One behavior rule the simulator applies to requests or pods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EffectRule {
    RefuseConnection { service: String },
    /// Clients authenticating against `store` (served by `service`) fail.
    AuthError { service: String, store: String, reason: AuthFailure },
    FailProbabilistically { service: String, p: f64 },
    PodPhaseOverride { service: String, phase: PodPhase },
    ReplicaOverride { service: String, replicas: u32 },
    ImageBug { service: String },
}

impl EffectRule {
    pub fn service(&self) -> &str {
        match self {
            EffectRule::RefuseConnection { service }
            | EffectRule::AuthError { service, .. }
            | EffectRule::FailProbabilistically { service, .. }
            | EffectRule::PodPhaseOverride { service, .. }
            | EffectRule::ReplicaOverride { service, .. }
            | EffectRule::ImageBug { service } => service,
        }
    }

    fn sort_key(&self) -> (String, u8, String) {
        let (tag, extra) = match self {
            EffectRule::RefuseConnection { .. } => (0, String::new()),
            EffectRule::AuthError { reason, .. } => (1, format!("{reason:?}")),
            EffectRule::FailProbabilistically { .. } => (2, String::new()),
            EffectRule::PodPhaseOverride { phase, .. } => (3, phase.to_string()),
            EffectRule::ReplicaOverride { .. } => (4, String::new()),
            EffectRule::ImageBug { .. } => (5, String::new()),
        };
        (self.service().to_string(), tag, extra)
    }
}

/// A set of behavior rules in canonical order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultEffect {
    pub rules: Vec<EffectRule>,
}

impl FaultEffect {
    fn from_rules(mut rules: Vec<EffectRule>) -> Self {
        rules.sort_by_key(EffectRule::sort_key);
        rules.dedup();
        Self { rules }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Services any rule applies to.
    pub fn services(&self) -> BTreeSet<&str> {
        self.rules.iter().map(EffectRule::service).collect()
    }
}

/// The behavior a fault produces once injected.
pub fn fault_semantics(spec: &FaultSpec) -> FaultEffect {
    let rules = spec
        .targets
        .iter()
        .filter_map(|t| {
            let service = t.clone();
            Some(match spec.name {
                FaultName::AuthenticationMissing => {
                    EffectRule::AuthError { store: t.clone(), service, reason: AuthFailure::MissingCredentials }
                }
                FaultName::TargetPortMisconfig => EffectRule::RefuseConnection { service },
                FaultName::RevokeAuth => {
                    EffectRule::AuthError { store: t.clone(), service, reason: AuthFailure::NotAuthorized }
                }
                FaultName::UserUnregistered => {
                    EffectRule::AuthError { store: t.clone(), service, reason: AuthFailure::UserNotFound }
                }
                FaultName::BuggyAppImage => EffectRule::ImageBug { service },
                FaultName::ScalePod => EffectRule::ReplicaOverride { service, replicas: 0 },
                FaultName::AssignNonExistentNode => {
                    EffectRule::PodPhaseOverride { service, phase: PodPhase::Pending }
                }
                FaultName::NetworkLoss => EffectRule::FailProbabilistically { service, p: spec.loss_rate() },
                FaultName::PodFailure => EffectRule::PodPhaseOverride { service, phase: PodPhase::Failed },
                FaultName::Noop => return None,
            })
        })
        .collect();
    FaultEffect::from_rules(rules)
}

/// Derive the rules currently in force from cluster state. Every deviation
/// a fault introduces shows up here, and so does any equivalent deviation an
/// agent causes; a repaired deviation disappears.
pub fn active_effects(state: &ClusterState) -> FaultEffect {
    let ns = state.namespace().to_string();
    let mut rules = Vec::new();
    let Ok(services) = state.services(&ns) else { return FaultEffect::default() };
    for spec in services {
        let name = &spec.name;
        if spec.svc_target_port != spec.container_port {
            rules.push(EffectRule::RefuseConnection { service: name.clone() });
        }
        if let Some(deployed) = state.deploy_replicas(&ns, name) {
            if spec.desired_replicas < deployed {
                rules.push(EffectRule::ReplicaOverride { service: name.clone(), replicas: spec.desired_replicas });
            }
        }
        for pod in state.pods_of(&ns, name) {
            if pod.phase != PodPhase::Running {
                rules.push(EffectRule::PodPhaseOverride { service: name.clone(), phase: pod.phase });
            }
        }
        let p = state.network(name).loss_rate;
        if p > 0.0 {
            rules.push(EffectRule::FailProbabilistically { service: name.clone(), p });
        }
        if BUGGY_IMAGE_TAGS.contains(&spec.image_tag.as_str()) {
            rules.push(EffectRule::ImageBug { service: name.clone() });
        }
        if let Some(auth) = &spec.requires_auth {
            if let Some(reason) = auth_failure(state, &ns, name, &auth.store, &auth.principal) {
                rules.push(EffectRule::AuthError {
                    service: auth.store.clone(),
                    store: auth.store.clone(),
                    reason,
                });
            }
        }
    }
    FaultEffect::from_rules(rules)
}

/// Why `client` cannot query `store`, judged from its serving pod.
pub(crate) fn auth_failure(
    state: &ClusterState,
    ns: &str,
    client: &str,
    store: &str,
    principal: &str,
) -> Option<AuthFailure> {
    let pod = state.serving_pod(ns, client)?;
    if pod.env.get(PASSWORD_KEY).is_none_or(|v| v.trim().is_empty()) {
        return Some(AuthFailure::MissingCredentials);
    }
    let Ok(s) = state.auth_store(store) else { return Some(AuthFailure::UserNotFound) };
    if !s.registered_users.contains(principal) {
        return Some(AuthFailure::UserNotFound);
    }
    if !s.principals.get(principal).is_some_and(|roles| roles.contains(ADMIN_ROLE)) {
        return Some(AuthFailure::NotAuthorized);
    }
    None
}
