//! Proxy for environments that live in another process.
//!
//! Wire format is one JSON object per line in each direction:
//!
//! ```text
//! -> {"op":"handshake","id":0,"protocol_version":1,"env_name":"webshop"}
//! <- {"id":0,"protocol_version":1,"env_name":"webshop"}
//! -> {"op":"reset","id":1,"task":{...TaskSpec...}}
//! <- {"id":1,"observation":"...","done":false,"reward":0.0}
//! -> {"op":"step","id":2,"action":"search[blue shoes]"}
//! <- {"id":2,"observation":"...","done":false,"reward":0.0}
//! <- {"id":3,"error":"unknown task"}
//! ```
//!
//! Each request waits up to the configured timeout. A reply that arrives for
//! a request that already timed out is discarded; any other id mismatch is a
//! protocol error.

use std::collections::HashSet;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EnvError, Environment, EnvironmentSpec, StepOutcome};
use crate::memory::TaskSpec;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Handshake {
        id: u64,
        protocol_version: u32,
        env_name: String,
    },
    Reset {
        id: u64,
        task: TaskSpec,
    },
    Step {
        id: u64,
        action: String,
    },
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Request::Handshake { id, .. } | Request::Reset { id, .. } | Request::Step { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_name: Option<String>,
}

fn io_err(e: io::Error) -> EnvError {
    EnvError::Io(e.to_string())
}

pub struct ExternalEnv {
    spec: EnvironmentSpec,
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    next_id: u64,
    abandoned: HashSet<u64>,
    timeout: Duration,
    child: Option<Child>,
    done: bool,
    reset_done: bool,
}

impl std::fmt::Debug for ExternalEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalEnv")
            .field("env_name", &self.spec.env_name)
            .field("next_id", &self.next_id)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl ExternalEnv {
    /// Wraps an already-open byte stream pair and performs the handshake.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        spec: EnvironmentSpec,
        timeout: Duration,
    ) -> Result<Self, EnvError> {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        let mut env = Self {
            spec,
            writer: Box::new(writer),
            lines: rx,
            next_id: 1,
            abandoned: HashSet::new(),
            timeout,
            child: None,
            done: false,
            reset_done: false,
        };
        env.handshake()?;
        Ok(env)
    }

    /// Starts `program args...` and talks to it over stdin/stdout.
    pub fn spawn(command: &[String], spec: EnvironmentSpec, timeout: Duration) -> Result<Self, EnvError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| EnvError::Io("empty environment command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EnvError::Io(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match Self::from_streams(stdout, stdin, spec, timeout) {
            Ok(mut env) => {
                env.child = Some(child);
                Ok(env)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    pub fn connect(addr: impl ToSocketAddrs, spec: EnvironmentSpec, timeout: Duration) -> Result<Self, EnvError> {
        let stream = TcpStream::connect(addr).map_err(io_err)?;
        let reader = stream.try_clone().map_err(io_err)?;
        Self::from_streams(reader, stream, spec, timeout)
    }

    fn handshake(&mut self) -> Result<(), EnvError> {
        let reply = self.call(Request::Handshake {
            id: 0,
            protocol_version: PROTOCOL_VERSION,
            env_name: self.spec.env_name.clone(),
        })?;
        if reply.protocol_version != Some(PROTOCOL_VERSION) {
            return Err(EnvError::Handshake(format!(
                "peer speaks protocol {:?}, expected {PROTOCOL_VERSION}",
                reply.protocol_version
            )));
        }
        if reply.env_name.as_deref() != Some(self.spec.env_name.as_str()) {
            return Err(EnvError::Handshake(format!(
                "peer serves {:?}, expected {:?}",
                reply.env_name, self.spec.env_name
            )));
        }
        Ok(())
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn call(&mut self, request: Request) -> Result<Reply, EnvError> {
        let id = request.id();
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(io_err)?;
        self.writer.flush().map_err(io_err)?;

        let deadline = Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(remaining) {
                Ok(line) => line.map_err(io_err)?,
                Err(RecvTimeoutError::Timeout) => {
                    self.abandoned.insert(id);
                    let op = match request {
                        Request::Handshake { .. } => "handshake",
                        Request::Reset { .. } => "reset",
                        Request::Step { .. } => "step",
                    };
                    return Err(EnvError::Timeout {
                        op: op.to_owned(),
                        after: self.timeout,
                    });
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(EnvError::Io("peer closed the connection".into()))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let reply: Reply = serde_json::from_str(&line)
                .map_err(|e| EnvError::Protocol(format!("malformed reply {line:?}: {e}")))?;
            if reply.id == id {
                if let Some(error) = reply.error {
                    return Err(EnvError::Peer(error));
                }
                return Ok(reply);
            }
            if !self.abandoned.remove(&reply.id) {
                return Err(EnvError::Protocol(format!(
                    "reply id {} does not match request id {id}",
                    reply.id
                )));
            }
        }
    }

    fn observation(reply: &Reply) -> Result<String, EnvError> {
        reply
            .observation
            .clone()
            .ok_or_else(|| EnvError::Protocol(format!("reply {} has no observation", reply.id)))
    }
}

impl Environment for ExternalEnv {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn reset(&mut self, task: &TaskSpec) -> Result<String, EnvError> {
        if task.env_name != self.spec.env_name {
            return Err(EnvError::WrongEnvironment {
                expected: self.spec.env_name.clone(),
                found: task.env_name.clone(),
            });
        }
        let id = self.fresh_id();
        let reply = self.call(Request::Reset {
            id,
            task: task.clone(),
        })?;
        self.done = false;
        self.reset_done = true;
        Self::observation(&reply)
    }

    fn step(&mut self, action: &str) -> Result<StepOutcome, EnvError> {
        if !self.reset_done {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let id = self.fresh_id();
        let reply = self.call(Request::Step {
            id,
            action: action.to_owned(),
        })?;
        let outcome = StepOutcome {
            observation: Self::observation(&reply)?,
            done: reply.done.unwrap_or(false),
            reward: reply.reward.unwrap_or(0.0),
        };
        self.done = outcome.done;
        Ok(outcome)
    }
}

impl Drop for ExternalEnv {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Peer side of the protocol: answers requests from `reader` using `env`
/// until end of input.
pub fn serve(env: &mut dyn Environment, reader: impl BufRead, mut writer: impl Write) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64))
                    .unwrap_or(0);
                Reply {
                    id,
                    error: Some(format!("bad request: {e}")),
                    ..Reply::default()
                }
            }
            Ok(Request::Handshake { id, .. }) => Reply {
                id,
                protocol_version: Some(PROTOCOL_VERSION),
                env_name: Some(env.spec().env_name.clone()),
                ..Reply::default()
            },
            Ok(Request::Reset { id, task }) => match env.reset(&task) {
                Ok(observation) => Reply {
                    id,
                    observation: Some(observation),
                    done: Some(false),
                    reward: Some(0.0),
                    ..Reply::default()
                },
                Err(e) => Reply {
                    id,
                    error: Some(e.to_string()),
                    ..Reply::default()
                },
            },
            Ok(Request::Step { id, action }) => match env.step(&action) {
                Ok(out) => Reply {
                    id,
                    observation: Some(out.observation),
                    done: Some(out.done),
                    reward: Some(out.reward),
                    ..Reply::default()
                },
                Err(e) => Reply {
                    id,
                    error: Some(e.to_string()),
                    ..Reply::default()
                },
            },
        };
        let mut out = serde_json::to_string(&reply).expect("reply serializes");
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

pub const ECHO: &str = "echo";

/// Test peer: reset returns the instruction, step returns the action.
#[derive(Debug, Clone)]
pub struct EchoWorld {
    spec: EnvironmentSpec,
}

impl Default for EchoWorld {
    fn default() -> Self {
        Self {
            spec: EnvironmentSpec {
                env_name: ECHO.to_owned(),
                description: "Replies with whatever it is sent.".to_owned(),
                action_grammar: vec!["<any text>".to_owned()],
                step_budget: usize::MAX,
                few_shot: "> hello\nhello\n".to_owned(),
            },
        }
    }
}

impl EchoWorld {
    pub fn spec() -> EnvironmentSpec {
        Self::default().spec
    }
}

impl Environment for EchoWorld {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn reset(&mut self, task: &TaskSpec) -> Result<String, EnvError> {
        Ok(task.instruction.clone())
    }

    fn step(&mut self, action: &str) -> Result<StepOutcome, EnvError> {
        Ok(StepOutcome {
            observation: action.to_owned(),
            done: false,
            reward: 0.0,
        })
    }
}
