//! Request-schedule files, version 1:
//!
//! ```text
//! #schedule v1
//! timestamp_ms,entry
//! 0,frontend
//! 66.66666666666667,frontend
//! ```
//!
//! Lines starting with `#` after the first are comments. Timestamps are
//! non-decreasing sim-milliseconds. An empty file is an empty schedule.

use std::fmt::Write as _;

use super::SimError;

pub const SCHEDULE_HEADER: &str = "#schedule v1";
const COLUMNS: &str = "timestamp_ms,entry";

pub fn parse_schedule(text: &str) -> Result<Vec<(f64, String)>, SimError> {
    let bad = |line: usize, reason: &str| SimError::MalformedTrace { line, reason: reason.to_string() };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, SCHEDULE_HEADER)) => {}
        Some((n, _)) => return Err(bad(n, "missing '#schedule v1' header")),
    }
    let mut out: Vec<(f64, String)> = Vec::new();
    for (n, line) in lines {
        if line.starts_with('#') || line == COLUMNS {
            continue;
        }
        let (ts, entry) = line.split_once(',').ok_or_else(|| bad(n, "expected 'timestamp_ms,entry'"))?;
        let t: f64 = ts.trim().parse().map_err(|_| bad(n, "timestamp is not a number"))?;
        if !t.is_finite() || t < 0.0 {
            return Err(bad(n, "timestamp must be a finite non-negative number"));
        }
        if out.last().is_some_and(|(prev, _)| *prev > t) {
            return Err(bad(n, "timestamps must be non-decreasing"));
        }
        let entry = entry.trim();
        if entry.is_empty() {
            return Err(bad(n, "entry service is empty"));
        }
        out.push((t, entry.to_string()));
    }
    Ok(out)
}

pub fn export_schedule(times: &[f64], entry: &str) -> String {
    let mut s = format!("{SCHEDULE_HEADER}\n{COLUMNS}\n");
    for t in times {
        let _ = writeln!(s, "{t},{entry}");
    }
    s
}
