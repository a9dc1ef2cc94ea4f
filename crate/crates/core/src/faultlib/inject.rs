use serde::{Deserialize, Serialize};

use super::{
    Extensibility, FaultError, FaultName, FaultSpec, BUGGY_IMAGE_SERVICE, BUGGY_IMAGE_TAGS, NONEXISTENT_NODE,
    PORT_OFFSET,
};
use crate::topology::{conn_config_map, Actor, ClusterState, PodPhase, ServiceKind, ADMIN_ROLE, PASSWORD_KEY};

/// What must be put back to undo one target's injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "undo", rename_all = "snake_case")]
enum Undo {
    Password { config_map: String, value: String, clients: Vec<String> },
    TargetPort { service: String, port: u16 },
    Role { store: String, principal: String, role: String },
    User { store: String, user: String },
    Image { service: String, tag: String },
    Replicas { service: String, replicas: u32 },
    NodeSelector { service: String, previous: Option<String> },
    Loss { service: String, previous: f64 },
    FailedPod { pod: String },
}

/// Proof of an active injection; hand it back to [`recover`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub spec: FaultSpec,
    pub injected_at_ms: u64,
    undo: Vec<Undo>,
}

impl InjectionRecord {
    pub fn key(&self) -> String {
        self.spec.key()
    }
}

fn check_targets(state: &ClusterState, spec: &FaultSpec) -> Result<(), FaultError> {
    spec.validate()?;
    if spec.app != state.app() {
        return Err(FaultError::InvalidSpec(format!(
            "fault targets {} but cluster runs {}",
            spec.app,
            state.app()
        )));
    }
    let ns = state.namespace();
    for t in &spec.targets {
        let svc = state.service(ns, t).map_err(|_| FaultError::UnknownTarget(t.clone()))?;
        match spec.extensibility {
            Extensibility::Full => {}
            Extensibility::Partial => {
                if svc.kind != ServiceKind::Database || state.auth_store(t).is_err() {
                    return Err(FaultError::InvalidSpec(format!(
                        "{} needs a database with an auth store, '{t}' is not one",
                        spec.name
                    )));
                }
            }
            Extensibility::Fixed => {
                if t != BUGGY_IMAGE_SERVICE {
                    return Err(FaultError::InvalidSpec(format!(
                        "{} is bound to '{BUGGY_IMAGE_SERVICE}'",
                        spec.name
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Clients that authenticate against `store`.
fn auth_clients(state: &ClusterState, store: &str) -> Vec<String> {
    let ns = state.namespace();
    state
        .services(ns)
        .map(|it| {
            it.filter(|s| s.requires_auth.as_ref().is_some_and(|a| a.store == store))
                .map(|s| s.name.clone())
                .collect()
        })
        .unwrap_or_default()
}

fn principals_of(state: &ClusterState, store: &str) -> Vec<String> {
    let ns = state.namespace();
    let mut out: Vec<String> = state
        .services(ns)
        .map(|it| {
            it.filter_map(|s| s.requires_auth.as_ref())
                .filter(|a| a.store == store)
                .map(|a| a.principal.clone())
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out.dedup();
    out
}

/// Inject `spec` into `state`.
pub fn inject(state: &mut ClusterState, spec: &FaultSpec) -> Result<InjectionRecord, FaultError> {
    check_targets(state, spec)?;
    let key = spec.key();
    if state.is_injection_active(&key) {
        return Err(FaultError::AlreadyInjected(key));
    }
    let ns = state.namespace().to_string();
    let injected_at_ms = state.now_ms();
    state.record_marker(Actor::Fault, "inject", &key);

    let mut undo = Vec::new();
    for target in &spec.targets {
        match spec.name {
            FaultName::AuthenticationMissing => {
                let cm = conn_config_map(target);
                let value = state.remove_config_value(Actor::Fault, &ns, &cm, PASSWORD_KEY)?.unwrap_or_default();
                let clients = auth_clients(state, target);
                for c in &clients {
                    state.restart_pods(Actor::Fault, &ns, c)?;
                }
                undo.push(Undo::Password { config_map: cm, value, clients });
            }
            FaultName::TargetPortMisconfig => {
                let svc = state.service(&ns, target)?;
                let (port, container) = (svc.svc_target_port, svc.container_port);
                state.patch_target_port(Actor::Fault, &ns, target, container.wrapping_add(PORT_OFFSET))?;
                undo.push(Undo::TargetPort { service: target.clone(), port });
            }
            FaultName::RevokeAuth => {
                for principal in principals_of(state, target) {
                    if state.revoke_role(Actor::Fault, target, &principal, ADMIN_ROLE)? {
                        undo.push(Undo::Role { store: target.clone(), principal, role: ADMIN_ROLE.to_string() });
                    }
                }
            }
            FaultName::UserUnregistered => {
                for user in principals_of(state, target) {
                    if state.unregister_user(Actor::Fault, target, &user)? {
                        undo.push(Undo::User { store: target.clone(), user });
                    }
                }
            }
            FaultName::BuggyAppImage => {
                let tag = state.service(&ns, target)?.image_tag.clone();
                state.set_image(Actor::Fault, &ns, target, BUGGY_IMAGE_TAGS[0])?;
                undo.push(Undo::Image { service: target.clone(), tag });
            }
            FaultName::ScalePod => {
                let replicas = state.service(&ns, target)?.desired_replicas;
                state.scale(Actor::Fault, &ns, target, 0)?;
                undo.push(Undo::Replicas { service: target.clone(), replicas });
            }
            FaultName::AssignNonExistentNode => {
                let previous = state.service(&ns, target)?.node_selector.clone();
                state.set_node_selector(Actor::Fault, &ns, target, Some(NONEXISTENT_NODE))?;
                undo.push(Undo::NodeSelector { service: target.clone(), previous });
            }
            FaultName::NetworkLoss => {
                let previous = state.network(target).loss_rate;
                state.set_loss_rate(Actor::Fault, &ns, target, spec.loss_rate())?;
                undo.push(Undo::Loss { service: target.clone(), previous });
            }
            FaultName::PodFailure => {
                let pod = state
                    .serving_pod(&ns, target)
                    .map(|p| p.pod_name.clone())
                    .ok_or_else(|| FaultError::InvalidSpec(format!("'{target}' has no running pod to fail")))?;
                state.set_pod_phase(Actor::Fault, &ns, &pod, PodPhase::Failed)?;
                undo.push(Undo::FailedPod { pod });
            }
            FaultName::Noop => {}
        }
    }
    state.mark_injection(&key, true);
    Ok(InjectionRecord { spec: spec.clone(), injected_at_ms, undo })
}

/// Undo an injection. Anything an agent already repaired is left alone.
pub fn recover(state: &mut ClusterState, record: &InjectionRecord) -> Result<(), FaultError> {
    let key = record.key();
    if !state.is_injection_active(&key) {
        return Err(FaultError::NotInjected(key));
    }
    let ns = state.namespace().to_string();
    state.record_marker(Actor::Recovery, "recover", &key);
    for u in record.undo.iter().rev() {
        match u {
            Undo::Password { config_map, value, clients } => {
                state.set_config_value(Actor::Recovery, &ns, config_map, PASSWORD_KEY, value)?;
                for c in clients {
                    state.restart_pods(Actor::Recovery, &ns, c)?;
                }
            }
            Undo::TargetPort { service, port } => state.patch_target_port(Actor::Recovery, &ns, service, *port)?,
            Undo::Role { store, principal, role } => state.grant_role(Actor::Recovery, store, principal, role)?,
            Undo::User { store, user } => state.register_user(Actor::Recovery, store, user)?,
            Undo::Image { service, tag } => state.set_image(Actor::Recovery, &ns, service, tag)?,
            Undo::Replicas { service, replicas } => state.scale(Actor::Recovery, &ns, service, *replicas)?,
            Undo::NodeSelector { service, previous } => {
                state.set_node_selector(Actor::Recovery, &ns, service, previous.as_deref())?
            }
            Undo::Loss { service, previous } => state.set_loss_rate(Actor::Recovery, &ns, service, *previous)?,
            Undo::FailedPod { pod } => {
                // The agent may already have replaced the pod.
                if state.pod(&ns, pod).is_ok() {
                    state.delete_pod(Actor::Recovery, &ns, pod)?;
                }
            }
        }
    }
    state.mark_injection(&key, false);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faultlib::{active_effects, fault_semantics, AuthFailure, EffectRule};
    use crate::topology::{load_app, AppName};

    fn specs() -> Vec<FaultSpec> {
        use AppName::*;
        use FaultName::*;
        vec![
            FaultSpec::new(AuthenticationMissing, HotelReservation, &["mongodb-profile"]),
            FaultSpec::new(TargetPortMisconfig, SocialNetwork, &["user-service"]),
            FaultSpec::new(RevokeAuth, HotelReservation, &["mongodb-geo"]),
            FaultSpec::new(UserUnregistered, HotelReservation, &["mongodb-rate"]),
            FaultSpec::new(BuggyAppImage, HotelReservation, &["geo"]),
            FaultSpec::new(ScalePod, SocialNetwork, &["text-service"]),
            FaultSpec::new(AssignNonExistentNode, SocialNetwork, &["user-service"]),
            FaultSpec::new(NetworkLoss, HotelReservation, &["user"]),
            FaultSpec::new(PodFailure, HotelReservation, &["user"]),
            FaultSpec::new(Noop, SocialNetwork, &[]),
        ]
    }

    #[test]
    fn injected_state_exhibits_declared_semantics() {
        for spec in specs() {
            let mut state = load_app(spec.app);
            inject(&mut state, &spec).unwrap();
            assert_eq!(active_effects(&state), fault_semantics(&spec), "{}", spec.name);
        }
    }

    #[test]
    fn inject_then_recover_is_identity_modulo_log_and_pod_names() {
        for spec in specs() {
            let fresh = load_app(spec.app);
            let mut state = fresh.clone();
            let rec = inject(&mut state, &spec).unwrap();
            recover(&mut state, &rec).unwrap();
            assert_eq!(state.fingerprint(), fresh.fingerprint(), "{}", spec.name);
            assert!(active_effects(&state).is_empty());
        }
    }

    #[test]
    fn revoke_auth_drops_admin_role() {
        let mut state = load_app(AppName::HotelReservation);
        let spec = FaultSpec::new(FaultName::RevokeAuth, AppName::HotelReservation, &["mongodb-geo"]);
        inject(&mut state, &spec).unwrap();
        assert!(!state.auth_store("mongodb-geo").unwrap().principals["admin"].contains(ADMIN_ROLE));
        assert!(active_effects(&state).rules.contains(&EffectRule::AuthError {
            service: "mongodb-geo".into(),
            store: "mongodb-geo".into(),
            reason: AuthFailure::NotAuthorized,
        }));
    }

    #[test]
    fn noop_only_adds_marker() {
        let mut state = load_app(AppName::SocialNetwork);
        let before = state.fingerprint();
        let rec = inject(&mut state, &FaultSpec::new(FaultName::Noop, AppName::SocialNetwork, &[])).unwrap();
        assert_eq!(state.fingerprint(), before);
        assert_eq!(state.change_log().len(), 1);
        assert_eq!(state.change_log()[0].action, "inject");
        recover(&mut state, &rec).unwrap();
    }

    #[test]
    fn scale_pod_zeroes_replicas() {
        let mut state = load_app(AppName::SocialNetwork);
        let spec = FaultSpec::new(FaultName::ScalePod, AppName::SocialNetwork, &["text-service"]);
        inject(&mut state, &spec).unwrap();
        let ns = "test-social-network";
        assert_eq!(state.service(ns, "text-service").unwrap().desired_replicas, 0);
        assert_eq!(state.running_pods(ns, "text-service"), 0);
    }

    #[test]
    fn target_port_recover_restores_container_port() {
        let mut state = load_app(AppName::SocialNetwork);
        let spec = FaultSpec::new(FaultName::TargetPortMisconfig, AppName::SocialNetwork, &["user-service"]);
        let rec = inject(&mut state, &spec).unwrap();
        let svc = state.service("test-social-network", "user-service").unwrap();
        assert_eq!(svc.svc_target_port, svc.container_port + PORT_OFFSET);
        recover(&mut state, &rec).unwrap();
        let svc = state.service("test-social-network", "user-service").unwrap();
        assert_eq!(svc.svc_target_port, svc.container_port);
    }

    #[test]
    fn error_paths() {
        let mut state = load_app(AppName::SocialNetwork);
        let spec = FaultSpec::new(FaultName::ScalePod, AppName::SocialNetwork, &["nope"]);
        assert_eq!(inject(&mut state, &spec), Err(FaultError::UnknownTarget("nope".into())));

        let spec = FaultSpec::new(FaultName::ScalePod, AppName::SocialNetwork, &["user-service"]);
        let rec = inject(&mut state, &spec).unwrap();
        assert!(matches!(inject(&mut state, &spec), Err(FaultError::AlreadyInjected(_))));
        recover(&mut state, &rec).unwrap();
        assert!(matches!(recover(&mut state, &rec), Err(FaultError::NotInjected(_))));

        // Partial faults need an auth-backed database.
        let spec = FaultSpec::new(FaultName::RevokeAuth, AppName::SocialNetwork, &["user-mongodb"]);
        assert!(matches!(inject(&mut state, &spec), Err(FaultError::InvalidSpec(_))));
        // Fixed faults are bound to one service.
        let mut hotel = load_app(AppName::HotelReservation);
        let spec = FaultSpec::new(FaultName::BuggyAppImage, AppName::HotelReservation, &["rate"]);
        assert!(matches!(inject(&mut hotel, &spec), Err(FaultError::InvalidSpec(_))));
        // App mismatch.
        let spec = FaultSpec::new(FaultName::PodFailure, AppName::HotelReservation, &["user-service"]);
        assert!(matches!(inject(&mut state, &spec), Err(FaultError::InvalidSpec(_))));
    }

    #[test]
    fn symptomatic_faults_leave_root_cause_state_alone() {
        for name in [FaultName::NetworkLoss, FaultName::PodFailure] {
            let fresh = load_app(AppName::HotelReservation);
            let mut state = fresh.clone();
            inject(&mut state, &FaultSpec::new(name, AppName::HotelReservation, &["user"])).unwrap();
            let ns = state.namespace().to_string();
            assert_eq!(state.config_maps(&ns).unwrap(), fresh.config_maps(&ns).unwrap());
            assert_eq!(state.auth_stores(), fresh.auth_stores());
            for s in fresh.services(&ns).unwrap() {
                assert_eq!(state.service(&ns, &s.name).unwrap().image_tag, s.image_tag);
            }
        }
    }
}
