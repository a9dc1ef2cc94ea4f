use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

/// Prefix of every telemetry path shown to agents.
pub const VIRTUAL_ROOT: &str = "/arena/telemetry";

/// Session scratch directory behind the virtual `/arena/telemetry` tree.
/// Agents only ever see virtual paths, so observations do not depend on
/// where the session runs.
#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    counter: u32,
}

impl Workspace {
    pub fn create(root: &Path) -> io::Result<Self> {
        if root.exists() {
            fs::remove_dir_all(root)?;
        }
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), counter: 0 })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// A fresh directory for one query result: (virtual path, real path).
    pub fn fresh_dir(&mut self, kind: &str) -> (String, PathBuf) {
        self.counter += 1;
        let rel = format!("{kind}/{:04}", self.counter);
        (format!("{VIRTUAL_ROOT}/{rel}"), self.root.join(rel))
    }

    /// Map a virtual path onto disk. Anything outside the tree is `None`.
    pub fn resolve(&self, virtual_path: &str) -> Option<PathBuf> {
        let rest = virtual_path.trim_end_matches('/').strip_prefix(VIRTUAL_ROOT)?;
        if !(rest.is_empty() || rest.starts_with('/')) {
            return None;
        }
        let rel = Path::new(rest.trim_start_matches('/'));
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return None;
        }
        Some(self.root.join(rel))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_stays_inside() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::create(&dir.path().join("ws")).unwrap();
        let (v, real) = ws.fresh_dir("metrics");
        assert_eq!(v, "/arena/telemetry/metrics/0001");
        assert_eq!(ws.resolve(&v).unwrap(), real);
        assert_eq!(ws.resolve("/arena/telemetry").unwrap(), ws.root());
        assert!(ws.resolve("/arena/telemetry/../etc").is_none());
        assert!(ws.resolve("/etc/passwd").is_none());
        assert!(ws.resolve("/arena/telemetryx").is_none());
    }
}
