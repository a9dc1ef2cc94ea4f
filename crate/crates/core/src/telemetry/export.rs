//! Offline dataset export.
//!
//! Layout (format version 1):
//!
//! ```text
//! <dir>/manifest.json      ExportManifest
//! <dir>/logs.jsonl         one LogEntry per line
//! <dir>/metrics.tsv        t_s, service, metric, value
//! <dir>/traces/<id>.json   one Trace per file
//! <dir>/SHA256             digest of everything above
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{write_metrics_file, write_trace_files, TelemetryStore};

pub const EXPORT_FORMAT_VERSION: u32 = 1;
const DIGEST_FILE: &str = "SHA256";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub format_version: u32,
    pub pid: String,
    pub seed: u64,
    pub namespace: String,
    pub start_ms: u64,
    pub end_ms: u64,
    /// When true the fault schedule is withheld.
    pub redacted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault_schedule: Option<String>,
    pub log_count: usize,
    pub metric_count: usize,
    pub trace_count: usize,
}

/// Write the whole store to `dir` and return the dataset digest.
pub fn export_offline(
    store: &TelemetryStore,
    dir: &Path,
    pid: &str,
    seed: u64,
    fault_schedule: Option<String>,
) -> io::Result<String> {
    fs::create_dir_all(dir)?;
    let mut logs = String::new();
    for e in store.logs() {
        logs.push_str(&serde_json::to_string(e).expect("log serializes"));
        logs.push('\n');
    }
    fs::write(dir.join("logs.jsonl"), logs)?;
    let end_s = store.horizon_ms().div_ceil(1000);
    let metric_count = write_metrics_file(&store.metric_points(0, end_s), dir)?;
    let trace_count = write_trace_files(store.traces(), &dir.join("traces"))?;
    let manifest = ExportManifest {
        format_version: EXPORT_FORMAT_VERSION,
        pid: pid.to_string(),
        seed,
        namespace: store.namespace().to_string(),
        start_ms: 0,
        end_ms: store.horizon_ms(),
        redacted: fault_schedule.is_none(),
        fault_schedule,
        log_count: store.logs().len(),
        metric_count,
        trace_count,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    let digest = dir_digest(dir)?;
    fs::write(dir.join(DIGEST_FILE), format!("{digest}\n"))?;
    Ok(digest)
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else if path.strip_prefix(root).map_or(true, |p| p != Path::new(DIGEST_FILE)) {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 over every file's relative path and contents, in path order.
pub fn dir_digest(dir: &Path) -> io::Result<String> {
    let mut files = Vec::new();
    collect(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(dir).expect("under root").to_string_lossy().replace('\\', "/");
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(fs::read(&f)?);
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}
