use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::protocol::{AgentMessage, ArenaMessage, ProtocolError, TokenCount, PROTOCOL_VERSION};
use crate::problems::Problem;

/// Default wall-clock budget for one `get_action` exchange.
pub const DEFAULT_STEP_TIMEOUT: Duration = Duration::from_secs(120);

/// The information triple shown to an agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentInit {
    pub description: String,
    pub instructions: String,
    pub api_docs: String,
}

impl AgentInit {
    /// The triple as one state text, used for the first step.
    pub fn render(&self) -> String {
        format!(
            "Problem description:\n{}\n\nInstructions:\n{}\n\nAvailable APIs:\n{}\n",
            self.description, self.instructions, self.api_docs
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentReply {
    pub action: String,
    pub tokens: Option<TokenCount>,
}

impl AgentReply {
    pub fn new(action: impl Into<String>) -> Self {
        Self { action: action.into(), tokens: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionResult {
    pub status: String,
    pub success: bool,
    pub steps: u32,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("agent did not answer within {0:?}")]
    Timeout(Duration),
    #[error("agent closed the connection")]
    Closed,
    #[error("failed to start agent: {0}")]
    Spawn(String),
    #[error("agent i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything that can solve a problem one action at a time.
pub trait Agent {
    /// Called once at registration; external agents handshake here.
    fn connect(&mut self) -> Result<(), AgentError> {
        Ok(())
    }

    fn init(&mut self, info: &AgentInit) -> Result<(), AgentError>;

    fn get_action(&mut self, state: &str) -> Result<AgentReply, AgentError>;

    fn finish(&mut self, _result: &SessionResult) {}

    /// Test-only agents that read the hidden problem say so here.
    fn needs_backdoor(&self) -> bool {
        false
    }

    fn attach_backdoor(&mut self, _problem: &Problem) {}
}

/// Replays a fixed list of actions, then repeats the last fallback.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    actions: VecDeque<String>,
    fallback: String,
    pub seen: Vec<String>,
}

impl ScriptedAgent {
    /// When the script runs out, the agent keeps sending `fallback`.
    pub fn new<I, S>(actions: I, fallback: &str) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { actions: actions.into_iter().map(Into::into).collect(), fallback: fallback.to_string(), seen: Vec::new() }
    }
}

impl Agent for ScriptedAgent {
    fn init(&mut self, _info: &AgentInit) -> Result<(), AgentError> {
        Ok(())
    }

    fn get_action(&mut self, state: &str) -> Result<AgentReply, AgentError> {
        self.seen.push(state.to_string());
        Ok(AgentReply::new(self.actions.pop_front().unwrap_or_else(|| self.fallback.clone())))
    }
}

/// An agent running as a subprocess that speaks the wire protocol on stdio.
pub struct ExecAgent {
    argv: Vec<String>,
    timeout: Duration,
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Option<Receiver<std::io::Result<String>>>,
    step: u32,
    pub remote_name: Option<String>,
}

impl ExecAgent {
    pub fn new(command_line: &str, timeout: Duration) -> Result<Self, AgentError> {
        let argv = shlex::split(command_line)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| AgentError::Spawn(format!("cannot parse command line `{command_line}`")))?;
        Ok(Self { argv, timeout, child: None, stdin: None, lines: None, step: 0, remote_name: None })
    }

    fn send(&mut self, msg: &ArenaMessage) -> Result<(), AgentError> {
        let stdin = self.stdin.as_mut().ok_or(AgentError::Closed)?;
        let mut line = msg.encode();
        line.push('\n');
        stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).map_err(|_| AgentError::Closed)
    }

    fn recv(&mut self) -> Result<AgentMessage, AgentError> {
        let rx = self.lines.as_ref().ok_or(AgentError::Closed)?;
        loop {
            let line = match rx.recv_timeout(self.timeout) {
                Ok(Ok(l)) => l,
                Ok(Err(e)) => return Err(e.into()),
                Err(RecvTimeoutError::Timeout) => return Err(AgentError::Timeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(AgentError::Closed),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Ok(AgentMessage::decode(&line)?);
        }
    }

    fn shutdown(&mut self) {
        self.stdin.take();
        if let Some(mut child) = self.child.take() {
            // Give a well-behaved agent a moment to exit on EOF.
            for _ in 0..50 {
                if matches!(child.try_wait(), Ok(Some(_))) {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Agent for ExecAgent {
    fn connect(&mut self) -> Result<(), AgentError> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AgentError::Spawn(format!("{}: {e}", self.argv[0])))?;
        self.stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        self.child = Some(child);
        self.lines = Some(rx);
        self.send(&ArenaMessage::Hello { protocol_version: PROTOCOL_VERSION })?;
        match self.recv()? {
            AgentMessage::Hello { name, .. } => {
                self.remote_name = name;
                Ok(())
            }
            other => Err(ProtocolError::Unexpected { expected: "hello", got: other.kind().to_string() }.into()),
        }
    }

    fn init(&mut self, info: &AgentInit) -> Result<(), AgentError> {
        self.send(&ArenaMessage::Init {
            description: info.description.clone(),
            instructions: info.instructions.clone(),
            api_docs: info.api_docs.clone(),
        })?;
        self.step = 0;
        Ok(())
    }

    fn get_action(&mut self, state: &str) -> Result<AgentReply, AgentError> {
        self.step += 1;
        self.send(&ArenaMessage::State { step: self.step, observation: state.to_string() })?;
        match self.recv()? {
            AgentMessage::Action { action, tokens } => Ok(AgentReply { action, tokens }),
            other => Err(ProtocolError::Unexpected { expected: "action", got: other.kind().to_string() }.into()),
        }
    }

    fn finish(&mut self, result: &SessionResult) {
        let _ = self.send(&ArenaMessage::Result {
            status: result.status.clone(),
            success: result.success,
            steps: result.steps,
        });
        self.shutdown();
    }
}

impl Drop for ExecAgent {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// A person typing actions at a prompt.
pub struct HumanAgent<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> HumanAgent<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> Agent for HumanAgent<R, W> {
    fn init(&mut self, _info: &AgentInit) -> Result<(), AgentError> {
        Ok(())
    }

    fn get_action(&mut self, state: &str) -> Result<AgentReply, AgentError> {
        writeln!(self.output, "{state}")?;
        write!(self.output, "action> ")?;
        self.output.flush()?;
        let mut line = String::new();
        if self.input.read_line(&mut line)? == 0 {
            return Err(AgentError::Closed);
        }
        Ok(AgentReply::new(line.trim_end_matches(['\r', '\n'])))
    }

    fn finish(&mut self, result: &SessionResult) {
        let _ = writeln!(
            self.output,
            "session {}: success={} steps={}",
            result.status, result.success, result.steps
        );
    }
}
