//! Newline-delimited JSON wire protocol between the arena and an external agent.
//!
//! ```text
//! arena -> agent   {"type":"hello","protocol_version":1}
//! agent -> arena   {"type":"hello","protocol_version":1,"name":"my-agent"}
//! arena -> agent   {"type":"init",...}            once per session
//! arena -> agent   {"type":"state",...}           every step
//! agent -> arena   {"type":"action",...}          reply to each state
//! arena -> agent   {"type":"result",...}          once, then stdin closes
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

/// Token counts an agent may report for one action, replacing the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenCount {
    pub input: u64,
    pub output: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArenaMessage {
    Hello {
        protocol_version: u32,
    },
    Init {
        description: String,
        instructions: String,
        api_docs: String,
    },
    State {
        step: u32,
        observation: String,
    },
    Result {
        status: String,
        success: bool,
        steps: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentMessage {
    Hello {
        protocol_version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Action {
        action: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tokens: Option<TokenCount>,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {got} (arena speaks {PROTOCOL_VERSION})")]
    Version { got: u32 },
    #[error("expected a {expected} message, got {got}")]
    Unexpected { expected: &'static str, got: String },
}

impl ArenaMessage {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("arena messages serialize")
    }

    pub fn decode(line: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }
}

impl AgentMessage {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("agent messages serialize")
    }

    pub fn decode(line: &str) -> Result<Self, ProtocolError> {
        let msg: Self =
            serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if let AgentMessage::Hello { protocol_version, .. } = msg {
            if protocol_version != PROTOCOL_VERSION {
                return Err(ProtocolError::Version { got: protocol_version });
            }
        }
        Ok(msg)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AgentMessage::Hello { .. } => "hello",
            AgentMessage::Action { .. } => "action",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = ArenaMessage::State { step: 3, observation: "a\nb".into() };
        assert_eq!(m.encode(), r#"{"type":"state","step":3,"observation":"a\nb"}"#);
        assert_eq!(ArenaMessage::decode(&m.encode()).unwrap(), m);
        let a = AgentMessage::Action { action: "submit()".into(), tokens: None };
        assert_eq!(a.encode(), r#"{"type":"action","action":"submit()"}"#);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(AgentMessage::decode("submit()"), Err(ProtocolError::Malformed(_))));
        assert!(AgentMessage::decode(r#"{"type":"action"}"#).is_err());
        assert!(AgentMessage::decode(r#"{"type":"action","action":"x","extra":1}"#).is_err());
        assert_eq!(
            AgentMessage::decode(r#"{"type":"hello","protocol_version":9}"#),
            Err(ProtocolError::Version { got: 9 })
        );
    }
}
