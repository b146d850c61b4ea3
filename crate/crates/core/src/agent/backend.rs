//! Model backends: a scripted replayer for hermetic runs and a remote
//! chat-completion client.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::Message;
use crate::toolbox::{ToolCall, ToolDef};

pub const API_KEY_ENV: &str = "SIGREC_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "content", rename_all = "snake_case")]
pub enum ModelTurn {
    Text(String),
    ToolCall(ToolCall),
    Yield(String),
}

#[derive(Debug, Clone, Copy)]
pub struct ModelRequest<'a> {
    pub messages: &'a [Message],
    pub tools: &'a [ToolDef],
    /// Symbol text of the target, e.g. `-[Foo reset]`.
    pub target: &'a str,
    /// 1-based refinement iteration.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("script exhausted for {target} at iteration {iteration}")]
    ScriptExhausted { target: String, iteration: usize },
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

pub trait ModelBackend {
    fn generate(&mut self, req: &ModelRequest<'_>) -> Result<ModelTurn, BackendError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for Box<B> {
    fn generate(&mut self, req: &ModelRequest<'_>) -> Result<ModelTurn, BackendError> {
        (**self).generate(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    Text,
    ToolCall,
    Yield,
}

/// One entry of a script file. Missing `target` or `iteration` match any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptTurn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    pub kind: ScriptKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    /// Replay this turn forever instead of consuming it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl ScriptTurn {
    fn to_turn(&self) -> Result<ModelTurn, BackendError> {
        match self.kind {
            ScriptKind::Text => Ok(ModelTurn::Text(self.content.clone().unwrap_or_default())),
            ScriptKind::Yield => self
                .signature
                .clone()
                .or_else(|| self.content.clone())
                .map(ModelTurn::Yield)
                .ok_or_else(|| BackendError::InvalidScript("yield turn without signature".into())),
            ScriptKind::ToolCall => {
                let tool = self
                    .tool
                    .clone()
                    .ok_or_else(|| BackendError::InvalidScript("tool_call turn without tool".into()))?;
                Ok(ModelTurn::ToolCall(ToolCall {
                    tool_name: tool,
                    args: self.args.iter().map(|(k, v)| (k.clone(), json_arg(v))).collect(),
                    turn_index: 0,
                }))
            }
        }
    }
}

fn json_arg(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn parse_script(bytes: &[u8]) -> Result<Vec<ScriptTurn>, BackendError> {
    let turns: Vec<ScriptTurn> =
        serde_json::from_slice(bytes).map_err(|e| BackendError::InvalidScript(e.to_string()))?;
    for (i, t) in turns.iter().enumerate() {
        t.to_turn().map_err(|e| BackendError::InvalidScript(format!("entry {}: {e}", i + 1)))?;
    }
    Ok(turns)
}

/// Replays a recorded turn list. Each (target, iteration) pair gets its own
/// queue, so the replay is independent of the order targets are processed.
/// Entries naming the target take precedence over generic ones.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: Vec<ScriptTurn>,
    queues: HashMap<(String, usize), VecDeque<ScriptTurn>>,
}

impl ScriptedBackend {
    pub fn new(script: Vec<ScriptTurn>) -> Self {
        ScriptedBackend { script, queues: HashMap::new() }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, BackendError> {
        parse_script(bytes).map(Self::new)
    }

    fn queue_for(&self, target: &str, iteration: usize) -> VecDeque<ScriptTurn> {
        let tiers: [&dyn Fn(&ScriptTurn) -> bool; 4] = [
            &|t| t.target.as_deref() == Some(target) && t.iteration == Some(iteration),
            &|t| t.target.as_deref() == Some(target) && t.iteration.is_none(),
            &|t| t.target.is_none() && t.iteration == Some(iteration),
            &|t| t.target.is_none() && t.iteration.is_none(),
        ];
        for tier in tiers {
            let q: VecDeque<ScriptTurn> = self.script.iter().filter(|t| tier(t)).cloned().collect();
            if !q.is_empty() {
                return q;
            }
        }
        VecDeque::new()
    }
}

impl ModelBackend for ScriptedBackend {
    fn generate(&mut self, req: &ModelRequest<'_>) -> Result<ModelTurn, BackendError> {
        let key = (req.target.to_string(), req.iteration);
        if !self.queues.contains_key(&key) {
            let q = self.queue_for(req.target, req.iteration);
            self.queues.insert(key.clone(), q);
        }
        let q = self.queues.get_mut(&key).expect("inserted");
        let exhausted = || BackendError::ScriptExhausted { target: req.target.to_string(), iteration: req.iteration };
        let front = q.front().ok_or_else(exhausted)?;
        let turn = front.to_turn()?;
        if !front.repeat {
            q.pop_front();
        }
        Ok(turn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

/// Chat-completion client. Request body:
/// `{model, messages[], tools[], temperature}`; response body:
/// `{message: {content | tool_calls[{name, arguments}]}}`.
pub struct RemoteBackend {
    cfg: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { cfg, api_key, agent }
    }

    /// Reads the credential from `SIGREC_API_KEY`.
    pub fn from_env(cfg: RemoteConfig) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        RemoteBackend::new(cfg, key)
    }

    pub fn request_body(&self, req: &ModelRequest<'_>) -> serde_json::Value {
        let tools: Vec<serde_json::Value> = req
            .tools
            .iter()
            .map(|d| {
                serde_json::json!({
                    "name": d.name.as_str(),
                    "description": d.description,
                    "parameters": d.parameters_schema(),
                })
            })
            .collect();
        serde_json::json!({
            "model": self.cfg.model,
            "messages": req.messages,
            "tools": tools,
            "temperature": self.cfg.temperature,
        })
    }
}

impl ModelBackend for RemoteBackend {
    fn generate(&mut self, req: &ModelRequest<'_>) -> Result<ModelTurn, BackendError> {
        let mut call = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(self.request_body(req)).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => parse_response(body.as_bytes()),
            401 | 403 => Err(BackendError::Auth(format!("HTTP {status}"))),
            _ => Err(BackendError::Transport(format!("HTTP {status}: {}", truncate(&body, 200)))),
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Maps a response body to a turn. A tool call named `yield` becomes
/// [`ModelTurn::Yield`]; plain text never does.
pub fn parse_response(bytes: &[u8]) -> Result<ModelTurn, BackendError> {
    let bad = |m: &str| BackendError::MalformedResponse(m.to_string());
    let v: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    let msg = v.get("message").or_else(|| v.pointer("/choices/0/message")).ok_or_else(|| bad("missing `message`"))?;
    if let Some(calls) = msg.get("tool_calls").and_then(|c| c.as_array()).filter(|c| !c.is_empty()) {
        let c = &calls[0];
        let name = c
            .get("name")
            .or_else(|| c.get("function").and_then(|f| f.get("name")))
            .and_then(|n| n.as_str())
            .ok_or_else(|| bad("tool call without name"))?;
        let raw_args = c
            .get("arguments")
            .or_else(|| c.get("function").and_then(|f| f.get("arguments")))
            .cloned()
            .unwrap_or(serde_json::Value::Object(Default::default()));
        let args = match raw_args {
            serde_json::Value::String(s) if s.trim().is_empty() => serde_json::Value::Object(Default::default()),
            serde_json::Value::String(s) => {
                serde_json::from_str(&s).map_err(|e| BackendError::MalformedResponse(format!("arguments: {e}")))?
            }
            other => other,
        };
        let obj = args.as_object().ok_or_else(|| bad("arguments is not an object"))?;
        if name == "yield" {
            let sig = obj.get("signature").and_then(|s| s.as_str()).ok_or_else(|| bad("yield without signature"))?;
            return Ok(ModelTurn::Yield(sig.to_string()));
        }
        return Ok(ModelTurn::ToolCall(ToolCall {
            tool_name: name.to_string(),
            args: obj.iter().map(|(k, v)| (k.clone(), json_arg(v))).collect(),
            turn_index: 0,
        }));
    }
    match msg.get("content") {
        Some(serde_json::Value::String(s)) => Ok(ModelTurn::Text(s.clone())),
        _ => Err(bad("neither content nor tool_calls")),
    }
}
