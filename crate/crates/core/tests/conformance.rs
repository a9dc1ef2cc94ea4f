use arena_core::orchestrator::protocol::{AgentMessage, ArenaMessage, PROTOCOL_VERSION};
use serde::Deserialize;

#[derive(Deserialize)]
struct Vectors {
    protocol_version: u32,
    valid: Vec<Vector>,
    invalid: Vec<Vector>,
}

#[derive(Deserialize)]
struct Vector {
    direction: String,
    line: String,
}

fn vectors() -> Vectors {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../protocol/conformance_vectors.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn version_matches() {
    assert_eq!(vectors().protocol_version, PROTOCOL_VERSION);
}

#[test]
fn valid_lines_round_trip_byte_for_byte() {
    let v = vectors();
    assert!(v.valid.len() >= 8);
    for vec in &v.valid {
        let encoded = match vec.direction.as_str() {
            "arena_to_agent" => ArenaMessage::decode(&vec.line).unwrap_or_else(|e| panic!("{}: {e}", vec.line)).encode(),
            "agent_to_arena" => AgentMessage::decode(&vec.line).unwrap_or_else(|e| panic!("{}: {e}", vec.line)).encode(),
            d => panic!("unknown direction {d}"),
        };
        assert_eq!(encoded, vec.line);
        // Trailing newlines from the transport are tolerated.
        let with_nl = format!("{}\r\n", vec.line);
        match vec.direction.as_str() {
            "arena_to_agent" => assert!(ArenaMessage::decode(&with_nl).is_ok()),
            _ => assert!(AgentMessage::decode(&with_nl).is_ok()),
        }
    }
}

#[test]
fn invalid_lines_are_rejected() {
    for vec in &vectors().invalid {
        let ok = match vec.direction.as_str() {
            "arena_to_agent" => ArenaMessage::decode(&vec.line).is_ok(),
            _ => AgentMessage::decode(&vec.line).is_ok(),
        };
        assert!(!ok, "accepted {:?}", vec.line);
    }
}
