use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use arena_core::faultlib::FaultName;
use arena_core::problems::{ProblemFilter, TaskKind};
use arena_core::AppName;

/// Environment variable naming the config file.
pub const CONFIG_ENV: &str = "ARENA_CONFIG";

/// Settings read from the config file. Flags override every field.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub step_stride: Option<u64>,
    pub max_steps: Option<u32>,
    pub out: Option<PathBuf>,
    pub allow_test_agents: Option<bool>,
    pub step_timeout_s: Option<u64>,
}

impl FileConfig {
    pub fn load_from_env() -> Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// `task=detection,app=hotel_res,fault=2`
pub fn parse_filter(s: &str) -> Result<ProblemFilter> {
    let mut f = ProblemFilter::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((k, v)) = part.split_once('=') else { bail!("filter term `{part}` is not key=value") };
        match k.trim() {
            "task" => f.task = Some(v.parse::<TaskKind>().map_err(|e| anyhow::anyhow!("{e}"))?),
            "app" => f.app = Some(v.parse::<AppName>().map_err(|e| anyhow::anyhow!("{e}"))?),
            "fault" => f.fault = Some(v.parse::<FaultName>().map_err(|e| anyhow::anyhow!("{e}"))?),
            other => bail!("unknown filter key `{other}` (use task, app or fault)"),
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters() {
        let f = parse_filter("task=detection, app=hotel_res").unwrap();
        assert_eq!(f.task, Some(TaskKind::Detection));
        assert_eq!(f.app, Some(AppName::HotelReservation));
        assert_eq!(parse_filter("fault=2").unwrap().fault, Some(FaultName::TargetPortMisconfig));
        assert!(parse_filter("colour=red").is_err());
        assert!(parse_filter("task").is_err());
        assert_eq!(parse_filter("").unwrap(), ProblemFilter::default());
    }

    #[test]
    fn config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("arena.toml");
        std::fs::write(&p, "seed = 9\nmax_steps = 20\n").unwrap();
        let c = FileConfig::load(&p).unwrap();
        assert_eq!((c.seed, c.max_steps), (Some(9), Some(20)));
        std::fs::write(&p, "sede = 9\n").unwrap();
        assert!(FileConfig::load(&p).is_err());
    }
}
