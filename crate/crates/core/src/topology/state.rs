use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AppName, ServiceKind, ServiceSpec, Topology};

/// Config map key holding the database password clients present.
pub const PASSWORD_KEY: &str = "password";
/// Config map key holding the database user name.
pub const USERNAME_KEY: &str = "username";
/// Role a principal must hold for reads and writes to succeed.
pub const ADMIN_ROLE: &str = "admin";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("namespace '{0}' not found")]
    UnknownNamespace(String),
    #[error("service '{0}' not found")]
    UnknownService(String),
    #[error("pod '{0}' not found")]
    UnknownPod(String),
    #[error("configmap '{0}' not found")]
    UnknownConfigMap(String),
    #[error("auth store '{0}' not found")]
    UnknownStore(String),
    #[error("principal '{0}' not found")]
    UnknownPrincipal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PodPhase {
    Running,
    Pending,
    Failed,
    CrashLoopBackOff,
}

impl fmt::Display for PodPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PodPhase::Running => "Running",
            PodPhase::Pending => "Pending",
            PodPhase::Failed => "Failed",
            PodPhase::CrashLoopBackOff => "CrashLoopBackOff",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodState {
    pub pod_name: String,
    pub service: String,
    pub phase: PodPhase,
    pub node: Option<String>,
    pub restart_count: u32,
    /// Replica ordinal; replacement pods reuse the lowest free slot.
    pub slot: u32,
    pub created_ms: u64,
    /// Environment loaded from config maps when the pod started.
    pub env: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Namespace {
    pub services: BTreeMap<String, ServiceSpec>,
    pub pods: Vec<PodState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuthStore {
    pub principals: BTreeMap<String, BTreeSet<String>>,
    pub registered_users: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkCondition {
    pub loss_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Deploy,
    Fault,
    Recovery,
    Agent,
}

/// One audited mutation of the cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub seq: u64,
    pub t_ms: u64,
    pub actor: Actor,
    pub action: String,
    pub target: String,
    pub detail: String,
}

/// The full simulated cloud. All mutation goes through methods that append
/// to the change log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    app: AppName,
    entry_service: String,
    /// Service names in topology order.
    service_order: Vec<String>,
    namespaces: BTreeMap<String, Namespace>,
    nodes: BTreeSet<String>,
    /// Worker nodes in registry order, used for round-robin placement.
    node_order: Vec<String>,
    config_maps: BTreeMap<String, BTreeMap<String, BTreeMap<String, String>>>,
    auth_stores: BTreeMap<String, AuthStore>,
    network: BTreeMap<String, NetworkCondition>,
    /// Replica counts recorded at deploy time, keyed by namespace then service.
    deploy_replicas: BTreeMap<String, BTreeMap<String, u32>>,
    active_injections: BTreeSet<String>,
    now_ms: u64,
    pod_seq: u64,
    change_log: Vec<ChangeRecord>,
}

pub fn conn_config_map(store: &str) -> String {
    format!("{store}-conn")
}

fn default_password(store: &str) -> String {
    format!("{store}-pw")
}

impl ClusterState {
    /// Deploy a validated topology: every service gets its desired replica
    /// count of Running pods and the change log starts empty.
    pub fn deploy(topo: &Topology) -> Self {
        let ns = topo.namespace.clone();
        let mut namespace = Namespace::default();
        for s in &topo.services {
            namespace.services.insert(s.name.clone(), s.clone());
        }
        let mut config_maps: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut auth_stores = BTreeMap::new();
        for s in &topo.services {
            if let Some(auth) = &s.requires_auth {
                let store: &mut AuthStore = auth_stores.entry(auth.store.clone()).or_default();
                store
                    .principals
                    .entry(auth.principal.clone())
                    .or_default()
                    .insert(ADMIN_ROLE.to_string());
                store.registered_users.insert(auth.principal.clone());
                config_maps.entry(conn_config_map(&auth.store)).or_insert_with(|| {
                    BTreeMap::from([
                        (USERNAME_KEY.to_string(), auth.principal.clone()),
                        (PASSWORD_KEY.to_string(), default_password(&auth.store)),
                    ])
                });
            }
        }
        let mut state = ClusterState {
            app: topo.app,
            entry_service: topo.entry_service().name.clone(),
            service_order: topo.services.iter().map(|s| s.name.clone()).collect(),
            namespaces: BTreeMap::from([(ns.clone(), namespace)]),
            nodes: topo.nodes.iter().cloned().collect(),
            node_order: topo.nodes.clone(),
            config_maps: BTreeMap::from([(ns.clone(), config_maps)]),
            auth_stores,
            network: topo
                .services
                .iter()
                .map(|s| (s.name.clone(), NetworkCondition::default()))
                .collect(),
            deploy_replicas: BTreeMap::from([(
                ns.clone(),
                topo.services.iter().map(|s| (s.name.clone(), s.desired_replicas)).collect(),
            )]),
            active_injections: BTreeSet::new(),
            now_ms: 0,
            pod_seq: 0,
            change_log: Vec::new(),
        };
        for name in state.service_order.clone() {
            state.reconcile(&ns, &name);
        }
        state
    }

    pub fn app(&self) -> AppName {
        self.app
    }

    /// The single application namespace.
    pub fn namespace(&self) -> &str {
        self.namespaces.keys().next().map(String::as_str).unwrap_or_default()
    }

    pub fn has_namespace(&self, ns: &str) -> bool {
        self.namespaces.contains_key(ns)
    }

    pub fn entry_service(&self) -> &str {
        &self.entry_service
    }

    pub fn service_order(&self) -> &[String] {
        &self.service_order
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    /// Stamp subsequent change records with sim time `t_ms`.
    pub fn set_time(&mut self, t_ms: u64) {
        self.now_ms = self.now_ms.max(t_ms);
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn change_log(&self) -> &[ChangeRecord] {
        &self.change_log
    }

    /// Change log as line-delimited JSON.
    pub fn change_log_jsonl(&self) -> String {
        self.change_log
            .iter()
            .map(|r| serde_json::to_string(r).expect("change record serializes") + "\n")
            .collect()
    }

    pub fn services(&self, ns: &str) -> Result<impl Iterator<Item = &ServiceSpec>, StateError> {
        let n = self.ns(ns)?;
        Ok(self.service_order.iter().filter_map(move |name| n.services.get(name)))
    }

    pub fn service(&self, ns: &str, name: &str) -> Result<&ServiceSpec, StateError> {
        self.ns(ns)?.services.get(name).ok_or_else(|| StateError::UnknownService(name.to_string()))
    }

    pub fn pods(&self, ns: &str) -> Result<&[PodState], StateError> {
        Ok(&self.ns(ns)?.pods)
    }

    pub fn pods_of<'a>(&'a self, ns: &str, service: &'a str) -> impl Iterator<Item = &'a PodState> + 'a {
        self.namespaces
            .get(ns)
            .into_iter()
            .flat_map(|n| n.pods.iter())
            .filter(move |p| p.service == service)
    }

    pub fn pod(&self, ns: &str, pod: &str) -> Result<&PodState, StateError> {
        self.ns(ns)?
            .pods
            .iter()
            .find(|p| p.pod_name == pod)
            .ok_or_else(|| StateError::UnknownPod(pod.to_string()))
    }

    pub fn running_pods(&self, ns: &str, service: &str) -> usize {
        self.pods_of(ns, service).filter(|p| p.phase == PodPhase::Running).count()
    }

    /// The pod that serves requests for `service`: the Running pod with the
    /// lowest slot.
    pub fn serving_pod<'a>(&'a self, ns: &str, service: &'a str) -> Option<&'a PodState> {
        self.pods_of(ns, service).filter(|p| p.phase == PodPhase::Running).min_by_key(|p| p.slot)
    }

    pub fn deploy_replicas(&self, ns: &str, service: &str) -> Option<u32> {
        self.deploy_replicas.get(ns)?.get(service).copied()
    }

    pub fn config_maps(&self, ns: &str) -> Result<&BTreeMap<String, BTreeMap<String, String>>, StateError> {
        self.config_maps.get(ns).ok_or_else(|| StateError::UnknownNamespace(ns.to_string()))
    }

    pub fn config_map(&self, ns: &str, name: &str) -> Result<&BTreeMap<String, String>, StateError> {
        self.config_maps(ns)?.get(name).ok_or_else(|| StateError::UnknownConfigMap(name.to_string()))
    }

    pub fn auth_stores(&self) -> &BTreeMap<String, AuthStore> {
        &self.auth_stores
    }

    pub fn auth_store(&self, store: &str) -> Result<&AuthStore, StateError> {
        self.auth_stores.get(store).ok_or_else(|| StateError::UnknownStore(store.to_string()))
    }

    pub fn network(&self, service: &str) -> NetworkCondition {
        self.network.get(service).copied().unwrap_or_default()
    }

    pub fn is_injection_active(&self, key: &str) -> bool {
        self.active_injections.contains(key)
    }

    pub(crate) fn mark_injection(&mut self, key: &str, active: bool) {
        if active {
            self.active_injections.insert(key.to_string());
        } else {
            self.active_injections.remove(key);
        }
    }

    fn ns(&self, ns: &str) -> Result<&Namespace, StateError> {
        self.namespaces.get(ns).ok_or_else(|| StateError::UnknownNamespace(ns.to_string()))
    }

    fn ns_mut(&mut self, ns: &str) -> Result<&mut Namespace, StateError> {
        self.namespaces.get_mut(ns).ok_or_else(|| StateError::UnknownNamespace(ns.to_string()))
    }

    fn spec_mut(&mut self, ns: &str, name: &str) -> Result<&mut ServiceSpec, StateError> {
        self.ns_mut(ns)?
            .services
            .get_mut(name)
            .ok_or_else(|| StateError::UnknownService(name.to_string()))
    }

    fn log(&mut self, actor: Actor, action: &str, target: &str, detail: String) {
        let seq = self.change_log.len() as u64;
        self.change_log.push(ChangeRecord {
            seq,
            t_ms: self.now_ms,
            actor,
            action: action.to_string(),
            target: target.to_string(),
            detail,
        });
    }

    /// Record a change-log entry that does not alter any resource.
    pub fn record_marker(&mut self, actor: Actor, action: &str, detail: &str) {
        self.log(actor, action, "-", detail.to_string());
    }

    pub fn scale(&mut self, actor: Actor, ns: &str, service: &str, replicas: u32) -> Result<(), StateError> {
        let spec = self.spec_mut(ns, service)?;
        let prev = spec.desired_replicas;
        spec.desired_replicas = replicas;
        self.log(actor, "scale", service, format!("replicas {prev} -> {replicas}"));
        self.reconcile(ns, service);
        Ok(())
    }

    pub fn patch_target_port(&mut self, actor: Actor, ns: &str, service: &str, port: u16) -> Result<(), StateError> {
        let spec = self.spec_mut(ns, service)?;
        let prev = spec.svc_target_port;
        spec.svc_target_port = port;
        self.log(actor, "patch_target_port", service, format!("targetPort {prev} -> {port}"));
        Ok(())
    }

    /// Change the container image; pods are replaced.
    pub fn set_image(&mut self, actor: Actor, ns: &str, service: &str, tag: &str) -> Result<(), StateError> {
        let spec = self.spec_mut(ns, service)?;
        let prev = std::mem::replace(&mut spec.image_tag, tag.to_string());
        self.log(actor, "set_image", service, format!("image {prev} -> {tag}"));
        self.replace_pods(ns, service);
        Ok(())
    }

    /// Set or clear the node selector; pods are replaced.
    pub fn set_node_selector(
        &mut self,
        actor: Actor,
        ns: &str,
        service: &str,
        node: Option<&str>,
    ) -> Result<(), StateError> {
        let spec = self.spec_mut(ns, service)?;
        let prev = std::mem::replace(&mut spec.node_selector, node.map(str::to_string));
        self.log(
            actor,
            "set_node_selector",
            service,
            format!("nodeSelector {} -> {}", prev.as_deref().unwrap_or("<none>"), node.unwrap_or("<none>")),
        );
        self.replace_pods(ns, service);
        Ok(())
    }

    /// Restart every pod of a service (pods re-read their config maps).
    pub fn restart_pods(&mut self, actor: Actor, ns: &str, service: &str) -> Result<(), StateError> {
        self.service(ns, service)?;
        self.log(actor, "restart", service, "rollout restart".to_string());
        self.replace_pods(ns, service);
        Ok(())
    }

    /// Delete a pod; the controller creates a replacement when below the
    /// desired replica count.
    pub fn delete_pod(&mut self, actor: Actor, ns: &str, pod: &str) -> Result<(), StateError> {
        let n = self.ns_mut(ns)?;
        let idx = n
            .pods
            .iter()
            .position(|p| p.pod_name == pod)
            .ok_or_else(|| StateError::UnknownPod(pod.to_string()))?;
        let removed = n.pods.remove(idx);
        self.log(actor, "delete_pod", pod, format!("service {}", removed.service));
        self.reconcile(ns, &removed.service);
        Ok(())
    }

    pub fn set_pod_phase(&mut self, actor: Actor, ns: &str, pod: &str, phase: PodPhase) -> Result<(), StateError> {
        let p = self
            .ns_mut(ns)?
            .pods
            .iter_mut()
            .find(|p| p.pod_name == pod)
            .ok_or_else(|| StateError::UnknownPod(pod.to_string()))?;
        let prev = p.phase;
        p.phase = phase;
        self.log(actor, "set_pod_phase", pod, format!("phase {prev} -> {phase}"));
        Ok(())
    }

    pub fn set_config_value(
        &mut self,
        actor: Actor,
        ns: &str,
        name: &str,
        key: &str,
        value: &str,
    ) -> Result<(), StateError> {
        let cm = self
            .config_maps
            .get_mut(ns)
            .ok_or_else(|| StateError::UnknownNamespace(ns.to_string()))?
            .get_mut(name)
            .ok_or_else(|| StateError::UnknownConfigMap(name.to_string()))?;
        cm.insert(key.to_string(), value.to_string());
        self.log(actor, "configmap_set", name, format!("set key {key}"));
        Ok(())
    }

    /// Remove a key, returning its previous value.
    pub fn remove_config_value(
        &mut self,
        actor: Actor,
        ns: &str,
        name: &str,
        key: &str,
    ) -> Result<Option<String>, StateError> {
        let cm = self
            .config_maps
            .get_mut(ns)
            .ok_or_else(|| StateError::UnknownNamespace(ns.to_string()))?
            .get_mut(name)
            .ok_or_else(|| StateError::UnknownConfigMap(name.to_string()))?;
        let prev = cm.remove(key);
        self.log(actor, "configmap_remove", name, format!("remove key {key}"));
        Ok(prev)
    }

    pub fn grant_role(&mut self, actor: Actor, store: &str, principal: &str, role: &str) -> Result<(), StateError> {
        let s = self.auth_stores.get_mut(store).ok_or_else(|| StateError::UnknownStore(store.to_string()))?;
        s.principals.entry(principal.to_string()).or_default().insert(role.to_string());
        self.log(actor, "grant_role", store, format!("{principal} +{role}"));
        Ok(())
    }

    pub fn revoke_role(&mut self, actor: Actor, store: &str, principal: &str, role: &str) -> Result<bool, StateError> {
        let s = self.auth_stores.get_mut(store).ok_or_else(|| StateError::UnknownStore(store.to_string()))?;
        let roles = s
            .principals
            .get_mut(principal)
            .ok_or_else(|| StateError::UnknownPrincipal(principal.to_string()))?;
        let had = roles.remove(role);
        self.log(actor, "revoke_role", store, format!("{principal} -{role}"));
        Ok(had)
    }

    pub fn register_user(&mut self, actor: Actor, store: &str, user: &str) -> Result<(), StateError> {
        let s = self.auth_stores.get_mut(store).ok_or_else(|| StateError::UnknownStore(store.to_string()))?;
        s.registered_users.insert(user.to_string());
        s.principals.entry(user.to_string()).or_default();
        self.log(actor, "register_user", store, user.to_string());
        Ok(())
    }

    pub fn unregister_user(&mut self, actor: Actor, store: &str, user: &str) -> Result<bool, StateError> {
        let s = self.auth_stores.get_mut(store).ok_or_else(|| StateError::UnknownStore(store.to_string()))?;
        let had = s.registered_users.remove(user);
        self.log(actor, "unregister_user", store, user.to_string());
        Ok(had)
    }

    pub fn set_loss_rate(&mut self, actor: Actor, ns: &str, service: &str, loss_rate: f64) -> Result<(), StateError> {
        self.service(ns, service)?;
        let cond = self.network.entry(service.to_string()).or_default();
        let prev = cond.loss_rate;
        cond.loss_rate = loss_rate.clamp(0.0, 1.0);
        self.log(actor, "set_loss_rate", service, format!("loss {prev} -> {loss_rate}"));
        Ok(())
    }

    fn replace_pods(&mut self, ns: &str, service: &str) {
        if let Some(n) = self.namespaces.get_mut(ns) {
            n.pods.retain(|p| p.service != service);
        }
        self.reconcile(ns, service);
    }

    /// Bring the pod set of `service` to its desired replica count.
    fn reconcile(&mut self, ns: &str, service: &str) {
        let Some(n) = self.namespaces.get(ns) else { return };
        let Some(spec) = n.services.get(service) else { return };
        let desired = spec.desired_replicas as usize;
        let selector = spec.node_selector.clone();
        let needs_creds = spec.requires_auth.as_ref().map(|a| conn_config_map(&a.store));
        let mut slots: Vec<u32> = n.pods.iter().filter(|p| p.service == service).map(|p| p.slot).collect();
        slots.sort_unstable();

        if slots.len() > desired {
            let drop: BTreeSet<u32> = slots[desired..].iter().copied().collect();
            self.namespaces
                .get_mut(ns)
                .expect("namespace exists")
                .pods
                .retain(|p| !(p.service == service && drop.contains(&p.slot)));
            return;
        }

        let service_idx = self.service_order.iter().position(|s| s == service).unwrap_or(0);
        let env = needs_creds
            .and_then(|cm| self.config_maps.get(ns).and_then(|m| m.get(&cm)).cloned())
            .unwrap_or_default();
        let mut created = Vec::new();
        let mut slot = 0u32;
        while slots.len() + created.len() < desired {
            while slots.contains(&slot) {
                slot += 1;
            }
            let (phase, node) = match &selector {
                Some(sel) if self.nodes.contains(sel) => (PodPhase::Running, Some(sel.clone())),
                Some(_) => (PodPhase::Pending, None),
                None => {
                    let i = (service_idx + slot as usize) % self.node_order.len();
                    (PodPhase::Running, Some(self.node_order[i].clone()))
                }
            };
            let pod_name = self.next_pod_name(ns, service);
            created.push(PodState {
                pod_name,
                service: service.to_string(),
                phase,
                node,
                restart_count: 0,
                slot,
                created_ms: self.now_ms,
                env: env.clone(),
            });
            slot += 1;
        }
        let n = self.namespaces.get_mut(ns).expect("namespace exists");
        n.pods.extend(created);
    }

    fn next_pod_name(&mut self, ns: &str, service: &str) -> String {
        loop {
            self.pod_seq += 1;
            let h = fnv1a(format!("{service}/{}", self.pod_seq).as_bytes());
            let name = format!("{service}-{}-{}", base36(h >> 32, 9), base36(h & 0xffff_ffff, 5));
            let taken = self.namespaces.get(ns).is_some_and(|n| n.pods.iter().any(|p| p.pod_name == name));
            if !taken {
                return name;
            }
        }
    }

    /// Pods as (service, phase, node, restart count) in a canonical order;
    /// equal for two states that differ only in pod names.
    pub fn pod_shape(&self) -> Vec<(String, String, PodPhase, Option<String>, u32)> {
        let mut out: Vec<_> = self
            .namespaces
            .iter()
            .flat_map(|(ns, n)| {
                n.pods.iter().map(move |p| (ns.clone(), p.service.clone(), p.phase, p.node.clone(), p.restart_count))
            })
            .collect();
        out.sort();
        out
    }

    /// Everything except the change log, injection markers, pod identities
    /// and the time stamp: two states with equal fingerprints are equivalent
    /// clusters.
    pub fn fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.change_log.clear();
        copy.active_injections.clear();
        copy.now_ms = 0;
        copy.pod_seq = 0;
        for n in copy.namespaces.values_mut() {
            for p in &mut n.pods {
                p.pod_name.clear();
                p.created_ms = 0;
            }
            n.pods.sort_by(|a, b| (&a.service, a.slot).cmp(&(&b.service, b.slot)));
        }
        serde_json::to_string(&copy).expect("state serializes")
    }

    pub fn kind_of(&self, ns: &str, service: &str) -> Option<ServiceKind> {
        self.service(ns, service).ok().map(|s| s.kind)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn base36(mut v: u64, width: usize) -> String {
    const DIGITS: &[u8] = b"0123456789bcdfghjklmnpqrstvwxz";
    let mut out = Vec::with_capacity(width);
    for _ in 0..width {
        out.push(DIGITS[(v % DIGITS.len() as u64) as usize]);
        v /= DIGITS.len() as u64;
    }
    String::from_utf8(out).expect("ascii")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{load_app, AppName};

    const NS: &str = "test-social-network";

    #[test]
    fn fresh_deploy_runs_every_replica() {
        let state = load_app(AppName::SocialNetwork);
        assert!(state.change_log().is_empty());
        for s in state.services(NS).unwrap() {
            assert_eq!(state.running_pods(NS, &s.name), s.desired_replicas as usize);
        }
        let names: BTreeSet<_> = state.pods(NS).unwrap().iter().map(|p| p.pod_name.clone()).collect();
        assert_eq!(names.len(), state.pods(NS).unwrap().len());
    }

    #[test]
    fn scale_to_zero_and_back() {
        let mut state = load_app(AppName::SocialNetwork);
        state.scale(Actor::Agent, NS, "text-service", 0).unwrap();
        assert_eq!(state.running_pods(NS, "text-service"), 0);
        state.scale(Actor::Agent, NS, "text-service", 3).unwrap();
        assert_eq!(state.running_pods(NS, "text-service"), 3);
        assert_eq!(state.change_log().len(), 2);
        assert!(state.change_log().iter().all(|r| r.actor == Actor::Agent));
    }

    #[test]
    fn nonexistent_node_selector_leaves_pods_pending() {
        let mut state = load_app(AppName::SocialNetwork);
        state.set_node_selector(Actor::Fault, NS, "user-service", Some("extra-node")).unwrap();
        let pods: Vec<_> = state.pods_of(NS, "user-service").collect();
        assert_eq!(pods.len(), 1);
        assert_eq!(pods[0].phase, PodPhase::Pending);
        assert!(pods[0].node.is_none());
        state.set_node_selector(Actor::Agent, NS, "user-service", None).unwrap();
        assert_eq!(state.running_pods(NS, "user-service"), 1);
    }

    #[test]
    fn deleting_failed_pod_recreates_running_replica() {
        let mut state = load_app(AppName::HotelReservation);
        let ns = "test-hotel-reservation";
        let pod = state.pods_of(ns, "user").next().unwrap().pod_name.clone();
        state.set_pod_phase(Actor::Fault, ns, &pod, PodPhase::Failed).unwrap();
        assert_eq!(state.running_pods(ns, "user"), 0);
        state.delete_pod(Actor::Agent, ns, &pod).unwrap();
        assert_eq!(state.running_pods(ns, "user"), 1);
        assert_ne!(state.pods_of(ns, "user").next().unwrap().pod_name, pod);
    }

    #[test]
    fn pods_load_credentials_at_start() {
        let mut state = load_app(AppName::HotelReservation);
        let ns = "test-hotel-reservation";
        let cm = conn_config_map("mongodb-geo");
        assert!(state.serving_pod(ns, "geo").unwrap().env.contains_key(PASSWORD_KEY));
        state.remove_config_value(Actor::Fault, ns, &cm, PASSWORD_KEY).unwrap();
        // Running pods keep the old environment until restarted.
        assert!(state.serving_pod(ns, "geo").unwrap().env.contains_key(PASSWORD_KEY));
        state.restart_pods(Actor::Fault, ns, "geo").unwrap();
        assert!(!state.serving_pod(ns, "geo").unwrap().env.contains_key(PASSWORD_KEY));
    }

    #[test]
    fn unknown_resources_error() {
        let mut state = load_app(AppName::SocialNetwork);
        assert_eq!(
            state.scale(Actor::Agent, "nope", "x", 1),
            Err(StateError::UnknownNamespace("nope".into()))
        );
        assert_eq!(state.scale(Actor::Agent, NS, "x", 1), Err(StateError::UnknownService("x".into())));
        assert!(state.delete_pod(Actor::Agent, NS, "ghost").is_err());
    }
}
