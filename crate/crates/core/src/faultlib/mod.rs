//! The fault library: ten parameterized faults that can be injected into and
//! recovered from a [`ClusterState`](crate::topology::ClusterState).
//!
//! Faults fall into two families. Functional faults leave a concrete root
//! cause in cluster state (a misconfigured port, a revoked role, a bad
//! scaling operation) and support every task level. Symptomatic faults only
//! produce observable symptoms (packet loss, a crashed pod) and support
//! detection and localization.

mod effects;
mod inject;
pub mod schedule;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{AppName, StateError};

pub use effects::{active_effects, fault_semantics, AuthFailure, EffectRule, FaultEffect};
pub use inject::{inject, recover, InjectionRecord};
pub(crate) use effects::auth_failure;

/// Loss probability used by NetworkLoss when no `loss_rate` param is given.
pub const DEFAULT_LOSS_RATE: f64 = 0.3;
/// TargetPortMisconfig moves the service target port this far from the
/// container port.
pub const PORT_OFFSET: u16 = 1000;
/// Node name AssignNonExistentNode pins pods to.
pub const NONEXISTENT_NODE: &str = "extra-node";
/// The one service BuggyAppImage is bound to.
pub const BUGGY_IMAGE_SERVICE: &str = "geo";
/// Image tags whose connection code is broken.
pub const BUGGY_IMAGE_TAGS: &[&str] = &["deathstarbench/hotel-reservation:app3"];

#[derive(Debug, Error, PartialEq)]
pub enum FaultError {
    #[error("unknown injection target '{0}'")]
    UnknownTarget(String),
    #[error("fault already injected: {0}")]
    AlreadyInjected(String),
    #[error("fault not injected: {0}")]
    NotInjected(String),
    #[error("invalid fault spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultName {
    AuthenticationMissing,
    TargetPortMisconfig,
    RevokeAuth,
    UserUnregistered,
    BuggyAppImage,
    ScalePod,
    AssignNonExistentNode,
    NetworkLoss,
    PodFailure,
    Noop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Application,
    Virtualization,
}

impl Layer {
    pub const ALL: [Layer; 2] = [Layer::Application, Layer::Virtualization];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Application => "application",
            Layer::Virtualization => "virtualization",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

/// Closed fault-type vocabulary for root-cause analysis answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultType {
    AuthMissing,
    PortMisconfig,
    AuthRevoked,
    UserUnregistered,
    BuggyImage,
    BadScaleOp,
    BadNodeAssignment,
}

impl FaultType {
    pub const ALL: [FaultType; 7] = [
        FaultType::AuthMissing,
        FaultType::PortMisconfig,
        FaultType::AuthRevoked,
        FaultType::UserUnregistered,
        FaultType::BuggyImage,
        FaultType::BadScaleOp,
        FaultType::BadNodeAssignment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultType::AuthMissing => "auth_missing",
            FaultType::PortMisconfig => "port_misconfig",
            FaultType::AuthRevoked => "auth_revoked",
            FaultType::UserUnregistered => "user_unregistered",
            FaultType::BuggyImage => "buggy_image",
            FaultType::BadScaleOp => "bad_scale_op",
            FaultType::BadNodeAssignment => "bad_node_assignment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Category {
    Functional { layer: Layer },
    Symptomatic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extensibility {
    /// Any service can be targeted.
    Full,
    /// Targets must be databases backed by an auth store.
    Partial,
    /// Bound to one hard-coded service.
    Fixed,
}

impl FaultName {
    pub const ALL: [FaultName; 10] = [
        FaultName::AuthenticationMissing,
        FaultName::TargetPortMisconfig,
        FaultName::RevokeAuth,
        FaultName::UserUnregistered,
        FaultName::BuggyAppImage,
        FaultName::ScalePod,
        FaultName::AssignNonExistentNode,
        FaultName::NetworkLoss,
        FaultName::PodFailure,
        FaultName::Noop,
    ];

    pub fn number(self) -> u8 {
        Self::ALL.iter().position(|f| *f == self).expect("listed") as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultName::AuthenticationMissing => "AuthenticationMissing",
            FaultName::TargetPortMisconfig => "TargetPortMisconfig",
            FaultName::RevokeAuth => "RevokeAuth",
            FaultName::UserUnregistered => "UserUnregistered",
            FaultName::BuggyAppImage => "BuggyAppImage",
            FaultName::ScalePod => "ScalePod",
            FaultName::AssignNonExistentNode => "AssignNonExistentNode",
            FaultName::NetworkLoss => "NetworkLoss",
            FaultName::PodFailure => "PodFailure",
            FaultName::Noop => "Noop",
        }
    }

    /// Prefix used in problem identifiers.
    pub fn slug(self) -> &'static str {
        match self {
            FaultName::AuthenticationMissing => "auth_miss_mongodb",
            FaultName::TargetPortMisconfig => "k8s_target_port_misconfig",
            FaultName::RevokeAuth => "revoke_auth_mongodb",
            FaultName::UserUnregistered => "user_unregistered_mongodb",
            FaultName::BuggyAppImage => "misconfig_app",
            FaultName::ScalePod => "scale_pod_zero",
            FaultName::AssignNonExistentNode => "assign_to_non_existent_node",
            FaultName::NetworkLoss => "network_loss",
            FaultName::PodFailure => "pod_failure",
            FaultName::Noop => "noop",
        }
    }

    pub fn category(self) -> Category {
        use FaultName::*;
        match self {
            AuthenticationMissing | TargetPortMisconfig | ScalePod | AssignNonExistentNode => {
                Category::Functional { layer: Layer::Virtualization }
            }
            RevokeAuth | UserUnregistered | BuggyAppImage => Category::Functional { layer: Layer::Application },
            NetworkLoss | PodFailure => Category::Symptomatic,
            Noop => Category::None,
        }
    }

    pub fn supported_levels(self) -> &'static [u8] {
        match self.category() {
            Category::Functional { .. } => &[1, 2, 3, 4],
            Category::Symptomatic => &[1, 2],
            Category::None => &[1],
        }
    }

    pub fn extensibility(self) -> Extensibility {
        use FaultName::*;
        match self {
            AuthenticationMissing | RevokeAuth | UserUnregistered => Extensibility::Partial,
            BuggyAppImage => Extensibility::Fixed,
            _ => Extensibility::Full,
        }
    }

    /// The (layer, fault type) root-cause label; `None` for faults without a
    /// root cause.
    pub fn root_cause(self) -> Option<(Layer, FaultType)> {
        let layer = match self.category() {
            Category::Functional { layer } => layer,
            _ => return None,
        };
        let ty = match self {
            FaultName::AuthenticationMissing => FaultType::AuthMissing,
            FaultName::TargetPortMisconfig => FaultType::PortMisconfig,
            FaultName::RevokeAuth => FaultType::AuthRevoked,
            FaultName::UserUnregistered => FaultType::UserUnregistered,
            FaultName::BuggyAppImage => FaultType::BuggyImage,
            FaultName::ScalePod => FaultType::BadScaleOp,
            FaultName::AssignNonExistentNode => FaultType::BadNodeAssignment,
            _ => unreachable!("functional faults are covered"),
        };
        Some((layer, ty))
    }

    pub fn description(self) -> &'static str {
        match self {
            FaultName::AuthenticationMissing => "Missing authentication credentials cause access denial to MongoDB.",
            FaultName::TargetPortMisconfig => "The service cannot connect to the specified port due to misconfiguration.",
            FaultName::RevokeAuth => "Revoked authentication causes database connection failure.",
            FaultName::UserUnregistered => "The database service has access failures after the user was unregistered.",
            FaultName::BuggyAppImage => "Connection code bug in the application image causes access issues.",
            FaultName::ScalePod => "Incorrect scaling operation makes the number of pod zero for a service.",
            FaultName::AssignNonExistentNode => "Pod in a pending a failure status due to wrong assignment to a non-existent node.",
            FaultName::NetworkLoss => "Network loss causes communication failures for a specific service.",
            FaultName::PodFailure => "Service interruption due to a pod failure.",
            FaultName::Noop => "No faults injected into the system.",
        }
    }
}

impl fmt::Display for FaultName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultName {
    type Err = FaultError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(n) = s.parse::<u8>() {
            return Self::from_number(n).ok_or_else(|| FaultError::InvalidSpec(format!("no fault number {n}")));
        }
        Self::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s) || f.slug() == s)
            .ok_or_else(|| FaultError::InvalidSpec(format!("unknown fault '{s}'")))
    }
}

/// A concrete, parameterized fault bound to an application and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub fault_no: u8,
    pub name: FaultName,
    pub category: Category,
    pub app: AppName,
    pub targets: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub supported_levels: Vec<u8>,
    pub extensibility: Extensibility,
}

impl FaultSpec {
    pub fn new(name: FaultName, app: AppName, targets: &[&str]) -> Self {
        Self {
            fault_no: name.number(),
            name,
            category: name.category(),
            app,
            targets: targets.iter().map(|s| s.to_string()).collect(),
            params: BTreeMap::new(),
            supported_levels: name.supported_levels().to_vec(),
            extensibility: name.extensibility(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn loss_rate(&self) -> f64 {
        self.params.get("loss_rate").copied().unwrap_or(DEFAULT_LOSS_RATE)
    }

    /// Identity of an injection; the same key cannot be active twice.
    pub fn key(&self) -> String {
        format!("{}:{}", self.name.as_str(), self.targets.join(","))
    }

    /// Check the metadata against the catalog entry for `name`.
    pub fn validate(&self) -> Result<(), FaultError> {
        let bad = |m: String| Err(FaultError::InvalidSpec(m));
        if self.fault_no != self.name.number() {
            return bad(format!("fault_no {} does not match {}", self.fault_no, self.name));
        }
        if self.category != self.name.category() {
            return bad(format!("category mismatch for {}", self.name));
        }
        if self.supported_levels != self.name.supported_levels() {
            return bad(format!("supported levels mismatch for {}", self.name));
        }
        if self.extensibility != self.name.extensibility() {
            return bad(format!("extensibility mismatch for {}", self.name));
        }
        match (self.name, self.targets.len()) {
            (FaultName::Noop, 0) => {}
            (FaultName::Noop, _) => return bad("Noop takes no targets".into()),
            (_, 0) => return bad(format!("{} needs at least one target", self.name)),
            _ => {}
        }
        if self.name == FaultName::NetworkLoss {
            let p = self.loss_rate();
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("loss_rate {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}
