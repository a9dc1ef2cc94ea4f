//! Agent-facing text. Nothing here may name a fault, a target or an answer
//! outside the vocabulary block; the pool's leak check enforces it.

use super::TaskKind;
use crate::faultlib::{FaultType, Layer};
use crate::telemetry::{LOG_LINE_CAP, LOG_WINDOW_S};
use crate::topology::{AppName, ERROR_RATE_THRESHOLD, HEALTH_WINDOW_S};

const VOCAB_BEGIN: &str = "Answer vocabulary:";
const VOCAB_END: &str = "End of answer vocabulary.";

pub fn app_description(app: AppName) -> String {
    let body = match app {
        AppName::HotelReservation => {
            "A hotel reservation service built from Go microservices that talk over gRPC. \
             Requests enter through a single frontend; stateful data lives in MongoDB and \
             hot data is cached in Memcached."
        }
        AppName::SocialNetwork => {
            "A social network service built from 28 microservices, including Memcached, \
             MongoDB and Redis backends. Requests enter through an nginx frontend and fan out \
             over Thrift RPCs."
        }
    };
    format!(
        "{body} The deployment runs in Kubernetes namespace {ns}. A constant open-loop workload \
         is hitting the frontend. You can read logs, metrics and traces, and run a restricted \
         set of shell commands against the cluster.",
        ns = app.namespace()
    )
}

fn vocabulary() -> String {
    let layers: Vec<&str> = Layer::ALL.iter().map(|l| l.as_str()).collect();
    let types: Vec<&str> = FaultType::ALL.iter().map(|t| t.as_str()).collect();
    format!(
        "{VOCAB_BEGIN}\n  system_level: {}\n  fault_type: {}\n{VOCAB_END}",
        layers.join(" | "),
        types.join(" | ")
    )
}

/// Remove the published vocabulary so the remainder can be leak-checked.
pub(super) fn strip_vocabulary(text: &str) -> String {
    match (text.find(VOCAB_BEGIN), text.find(VOCAB_END)) {
        (Some(a), Some(b)) if b > a => format!("{}{}", &text[..a], &text[b + VOCAB_END.len()..]),
        _ => text.to_string(),
    }
}

pub fn instructions_for(task: TaskKind) -> String {
    let common = format!(
        "Each turn, reply with exactly one API call, for example get_logs(\"<namespace>\", \"<service>\"). \
         Every call consumes one step and advances simulated time. Logs cover the trailing {LOG_WINDOW_S} \
         seconds and are capped at {LOG_LINE_CAP} lines. End the session with submit(...)."
    );
    let task_text = match task {
        TaskKind::Detection => "Task: detection. Decide whether there is an anomaly in the system. \
             Respond either \"yes\" if a fault is present or \"no\" if the system is behaving normally. \
             Submit exactly submit(\"yes\") or submit(\"no\"); surrounding whitespace and letter case are \
             ignored, anything else is graded as malformed."
            .to_string(),
        TaskKind::Localization => "Task: localization. Specify the exact location of the fault, usually \
             a service name. Submit an ordered list of up to 3 candidates, most likely first, for example \
             submit([\"svc-a\", \"svc-b\"]). The first entry is graded for top-1 accuracy and the first \
             three for top-3 accuracy."
            .to_string(),
        TaskKind::Analysis => format!(
            "Task: root cause analysis. Identify (1) the system layer the fault affects and (2) the type \
             of the fault. Submit both labels by keyword, for example \
             submit(system_level=\"<layer>\", fault_type=\"<type>\"). Both must be correct to succeed; \
             labels outside the vocabulary are graded as unknown.\n{}",
            vocabulary()
        ),
        TaskKind::Mitigation => format!(
            "Task: mitigation. Interact with the environment to fix the fault, then call submit(). \
             After you submit, the workload keeps running for {HEALTH_WINDOW_S} seconds and the whole \
             system is checked: every deployment must have at least its original number of Running pods, \
             no pod may be Pending or Failed, and at most {pct}% of requests may fail. Side effects on other \
             services count against you.",
            pct = ERROR_RATE_THRESHOLD * 100.0
        ),
    };
    format!("{task_text}\n{common}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_mentions_binary_format() {
        let t = instructions_for(TaskKind::Detection);
        assert!(t.contains("\"yes\"") && t.contains("\"no\""));
    }

    #[test]
    fn localization_mentions_top_three() {
        assert!(instructions_for(TaskKind::Localization).contains("up to 3 candidates"));
    }

    #[test]
    fn analysis_publishes_vocabulary() {
        let t = instructions_for(TaskKind::Analysis);
        for l in Layer::ALL {
            assert!(t.contains(l.as_str()));
        }
        for f in FaultType::ALL {
            assert!(t.contains(f.as_str()));
        }
        let stripped = strip_vocabulary(&t);
        assert!(!stripped.contains("port_misconfig"));
    }

    #[test]
    fn mitigation_mentions_side_effects() {
        let t = instructions_for(TaskKind::Mitigation);
        assert!(t.contains("Side effects"));
        assert!(t.contains("1%"));
    }
}
