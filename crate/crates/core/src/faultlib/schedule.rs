//! Fault schedule files.
//!
//! ```toml
//! version = 1
//! app = "HotelReservation"
//!
//! [[fault]]
//! fault = "NetworkLoss"
//! targets = ["user"]
//! params = { loss_rate = 0.3 }
//! inject_at_s = 300
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FaultError, FaultName, FaultSpec};
use crate::topology::AppName;

pub const SCHEDULE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledFault {
    pub fault: String,
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub inject_at_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSchedule {
    pub version: u32,
    pub app: AppName,
    #[serde(default, rename = "fault")]
    pub faults: Vec<ScheduledFault>,
}

impl FaultSchedule {
    pub fn new(app: AppName) -> Self {
        Self { version: SCHEDULE_VERSION, app, faults: Vec::new() }
    }

    pub fn push(&mut self, spec: &FaultSpec, inject_at_s: u64) {
        self.faults.push(ScheduledFault {
            fault: spec.name.as_str().to_string(),
            targets: spec.targets.clone(),
            params: spec.params.clone(),
            inject_at_s,
        });
    }

    pub fn parse(text: &str) -> Result<Self, FaultError> {
        let s: FaultSchedule = toml::from_str(text).map_err(|e| FaultError::InvalidSpec(e.to_string()))?;
        if s.version != SCHEDULE_VERSION {
            return Err(FaultError::InvalidSpec(format!("unsupported schedule version {}", s.version)));
        }
        s.specs()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schedule serializes")
    }

    /// Resolved specs, ordered by injection time.
    pub fn specs(&self) -> Result<Vec<(u64, FaultSpec)>, FaultError> {
        let mut out = Vec::with_capacity(self.faults.len());
        for f in &self.faults {
            let name: FaultName = f.fault.parse()?;
            let targets: Vec<&str> = f.targets.iter().map(String::as_str).collect();
            let mut spec = FaultSpec::new(name, self.app, &targets);
            spec.params = f.params.clone();
            spec.validate()?;
            out.push((f.inject_at_s, spec));
        }
        out.sort_by_key(|(t, _)| *t);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut s = FaultSchedule::new(AppName::HotelReservation);
        s.push(&FaultSpec::new(FaultName::NetworkLoss, AppName::HotelReservation, &["user"]).with_param("loss_rate", 0.25), 300);
        s.push(&FaultSpec::new(FaultName::Noop, AppName::HotelReservation, &[]), 10);
        let back = FaultSchedule::parse(&s.to_toml()).unwrap();
        assert_eq!(back, s);
        let specs = back.specs().unwrap();
        assert_eq!(specs[0].0, 10);
        assert_eq!(specs[1].1.loss_rate(), 0.25);
    }

    #[test]
    fn rejects_unknown_fault_and_version() {
        let bad = "version = 1\napp = \"HotelReservation\"\n[[fault]]\nfault = \"Meteor\"\ninject_at_s = 0\n";
        assert!(FaultSchedule::parse(bad).is_err());
        let bad = "version = 9\napp = \"HotelReservation\"\n";
        assert!(FaultSchedule::parse(bad).is_err());
    }
}
