//! Simulated applications and the cluster state they run on.
//!
//! Each application is described by a declarative topology file (TOML) that
//! lists its services, ports, replica counts and call dependencies. Loading an
//! application validates the graph and deploys it into a fresh
//! [`ClusterState`].

mod health;
mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use health::{health_check, HealthVerdict, Violation, ViolationKind, ERROR_RATE_THRESHOLD, HEALTH_WINDOW_S};
pub use state::{
    conn_config_map, Actor, AuthStore, ChangeRecord, ClusterState, NetworkCondition, Namespace,
    PodPhase, PodState, StateError, ADMIN_ROLE, PASSWORD_KEY, USERNAME_KEY,
};

const HOTEL_RESERVATION_TOML: &str = include_str!("../../topologies/hotel_reservation.toml");
const SOCIAL_NETWORK_TOML: &str = include_str!("../../topologies/social_network.toml");

/// Supported topology schema version.
pub const TOPOLOGY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("unknown application: {0}")]
    UnknownApp(String),
    #[error("malformed topology: {0}")]
    MalformedTopology(String),
    #[error("failed to read topology file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AppName {
    HotelReservation,
    SocialNetwork,
}

impl AppName {
    pub const ALL: [AppName; 2] = [AppName::HotelReservation, AppName::SocialNetwork];

    pub fn as_str(self) -> &'static str {
        match self {
            AppName::HotelReservation => "HotelReservation",
            AppName::SocialNetwork => "SocialNetwork",
        }
    }

    /// Short form used in problem identifiers.
    pub fn slug(self) -> &'static str {
        match self {
            AppName::HotelReservation => "hotel_res",
            AppName::SocialNetwork => "social_net",
        }
    }

    pub fn namespace(self) -> &'static str {
        match self {
            AppName::HotelReservation => "test-hotel-reservation",
            AppName::SocialNetwork => "test-social-network",
        }
    }
}

impl fmt::Display for AppName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AppName {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "hotelreservation" | "hotelres" => Ok(AppName::HotelReservation),
            "socialnetwork" | "socialnet" => Ok(AppName::SocialNetwork),
            _ => Err(TopologyError::UnknownApp(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    Stateless,
    Database,
    Cache,
    Frontend,
}

impl ServiceKind {
    fn default_latency_ms(self) -> f64 {
        match self {
            ServiceKind::Database => 10.0,
            _ => 5.0,
        }
    }
}

/// Credentials a service presents to a database's auth store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthRequirement {
    pub store: String,
    pub principal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub name: String,
    pub namespace: String,
    pub kind: ServiceKind,
    pub desired_replicas: u32,
    pub container_port: u16,
    pub svc_target_port: u16,
    pub dependencies: Vec<String>,
    pub node_selector: Option<String>,
    pub image_tag: String,
    pub requires_auth: Option<AuthRequirement>,
    pub base_latency_ms: f64,
}

/// A validated application topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub app: AppName,
    pub namespace: String,
    pub nodes: Vec<String>,
    /// Services in file order.
    pub services: Vec<ServiceSpec>,
}

impl Topology {
    pub fn entry_service(&self) -> &ServiceSpec {
        self.services
            .iter()
            .find(|s| s.kind == ServiceKind::Frontend)
            .expect("validated topology has a frontend")
    }

    pub fn service(&self, name: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    version: u32,
    app: String,
    namespace: String,
    nodes: Vec<String>,
    #[serde(rename = "service")]
    services: Vec<ServiceEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceEntry {
    name: String,
    kind: ServiceKind,
    replicas: u32,
    port: u16,
    #[serde(default)]
    dependencies: Vec<String>,
    image: String,
    base_latency_ms: Option<f64>,
    auth: Option<AuthRequirement>,
}

/// Parse and validate a topology document.
pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let file: TopologyFile =
        toml::from_str(text).map_err(|e| TopologyError::MalformedTopology(e.to_string()))?;
    if file.version != TOPOLOGY_VERSION {
        return Err(TopologyError::MalformedTopology(format!(
            "unsupported topology version {}",
            file.version
        )));
    }
    let app: AppName = file.app.parse()?;
    let services: Vec<ServiceSpec> = file
        .services
        .into_iter()
        .map(|e| ServiceSpec {
            namespace: file.namespace.clone(),
            kind: e.kind,
            desired_replicas: e.replicas,
            container_port: e.port,
            svc_target_port: e.port,
            dependencies: e.dependencies,
            node_selector: None,
            image_tag: e.image,
            requires_auth: e.auth,
            base_latency_ms: e.base_latency_ms.unwrap_or_else(|| e.kind.default_latency_ms()),
            name: e.name,
        })
        .collect();
    let topo = Topology { app, namespace: file.namespace, nodes: file.nodes, services };
    validate(&topo)?;
    Ok(topo)
}

pub fn load_topology_file(path: &Path) -> Result<Topology, TopologyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| TopologyError::Io { path: path.display().to_string(), source })?;
    parse_topology(&text)
}

fn validate(topo: &Topology) -> Result<(), TopologyError> {
    let bad = |msg: String| Err(TopologyError::MalformedTopology(msg));
    if topo.nodes.is_empty() {
        return bad("node registry is empty".into());
    }
    let mut names = BTreeSet::new();
    for s in &topo.services {
        if !names.insert(s.name.as_str()) {
            return bad(format!("duplicate service name '{}'", s.name));
        }
    }
    let frontends = topo.services.iter().filter(|s| s.kind == ServiceKind::Frontend).count();
    if frontends != 1 {
        return bad(format!("expected exactly one frontend service, found {frontends}"));
    }
    for s in &topo.services {
        for d in &s.dependencies {
            if !names.contains(d.as_str()) {
                return bad(format!("service '{}' depends on unknown service '{}'", s.name, d));
            }
        }
        if let Some(auth) = &s.requires_auth {
            match topo.service(&auth.store) {
                Some(db) if db.kind == ServiceKind::Database => {}
                _ => return bad(format!("service '{}' authenticates against non-database '{}'", s.name, auth.store)),
            }
            if !s.dependencies.contains(&auth.store) {
                return bad(format!("service '{}' authenticates against '{}' but does not call it", s.name, auth.store));
            }
        }
    }
    if let Some(cycle) = find_cycle(topo) {
        return bad(format!("dependency cycle: {}", cycle.join(" -> ")));
    }
    Ok(())
}

fn find_cycle(topo: &Topology) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let index: BTreeMap<&str, usize> =
        topo.services.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
    let mut marks = vec![Mark::New; topo.services.len()];
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        u: usize,
        topo: &Topology,
        index: &BTreeMap<&str, usize>,
        marks: &mut [Mark],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<String>> {
        marks[u] = Mark::Active;
        stack.push(u);
        for d in &topo.services[u].dependencies {
            let v = index[d.as_str()];
            match marks[v] {
                Mark::Active => {
                    let pos = stack.iter().position(|&x| x == v).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        stack[pos..].iter().map(|&i| topo.services[i].name.clone()).collect();
                    cycle.push(topo.services[v].name.clone());
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(c) = dfs(v, topo, index, marks, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        marks[u] = Mark::Done;
        None
    }

    for u in 0..topo.services.len() {
        if marks[u] == Mark::New {
            if let Some(c) = dfs(u, topo, &index, &mut marks, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AppCatalogEntry {
    pub app_name: AppName,
    /// Repository-relative path of the shipped topology definition.
    pub topology_source: &'static str,
    pub entry_service: &'static str,
}

pub fn catalog() -> [AppCatalogEntry; 2] {
    [
        AppCatalogEntry {
            app_name: AppName::HotelReservation,
            topology_source: "crates/core/topologies/hotel_reservation.toml",
            entry_service: "frontend",
        },
        AppCatalogEntry {
            app_name: AppName::SocialNetwork,
            topology_source: "crates/core/topologies/social_network.toml",
            entry_service: "nginx-thrift",
        },
    ]
}

/// The shipped topology for a catalog application.
pub fn app_topology(app: AppName) -> Topology {
    let text = match app {
        AppName::HotelReservation => HOTEL_RESERVATION_TOML,
        AppName::SocialNetwork => SOCIAL_NETWORK_TOML,
    };
    parse_topology(text).expect("shipped topology is valid")
}

/// Deploy a catalog application into a fresh cluster.
pub fn load_app(app: AppName) -> ClusterState {
    ClusterState::deploy(&app_topology(app))
}

/// Deploy an application named by string, e.g. from a CLI flag.
pub fn load_app_by_name(name: &str) -> Result<ClusterState, TopologyError> {
    let app: AppName = name.parse()?;
    Ok(load_app(app))
}

/// Services from which `target` is reachable along dependency edges (its
/// transitive callers), not including `target` itself.
pub fn upstream_of(topo: &Topology, target: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut frontier = vec![target.to_string()];
    while let Some(t) = frontier.pop() {
        for s in &topo.services {
            if s.dependencies.contains(&t) && out.insert(s.name.clone()) {
                frontier.push(s.name.clone());
            }
        }
    }
    out
}
