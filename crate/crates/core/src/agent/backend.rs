//! Model backends.
//!
//! A backend turns a prompt bundle into an ordered stream of text deltas and
//! tool invocations. [`ScriptedBackend`] replays canned streams keyed by the
//! bundle fingerprint and is what tests and trace replays use;
//! [`LiveBackend`] talks to an OpenAI-compatible chat-completions endpoint.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{fingerprint, PromptBundle, ToolSpec};
use crate::policy::CancelToken;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("no scripted response for key {key} (message type {message_type})")]
    NoScript { key: String, message_type: String },
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("could not parse model response: {0}")]
    Parse(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum StreamEvent {
    TextDelta { text: String },
    ToolCall { call: ToolInvocation },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StreamItem {
    /// Simulated time between the previous item and this one.
    pub delay_ms: u64,
    pub event: StreamEvent,
}

impl StreamItem {
    pub fn now(event: StreamEvent) -> Self {
        Self { delay_ms: 0, event }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self::now(StreamEvent::TextDelta { text: text.into() })
    }
}

/// Result of polling a stream without blocking.
#[derive(Debug)]
pub enum Polled {
    Item(Result<StreamItem, BackendError>),
    Pending,
    Finished,
}

type BoxedIter = Box<dyn Iterator<Item = Result<StreamItem, BackendError>> + Send>;

/// The items of one model turn.
pub struct TurnStream {
    source: Source,
}

enum Source {
    Ready(VecDeque<StreamItem>),
    Iter(BoxedIter),
    Channel {
        rx: Receiver<Result<StreamItem, BackendError>>,
        cancel: CancelToken,
    },
}

impl TurnStream {
    pub fn ready(items: impl IntoIterator<Item = StreamItem>) -> Self {
        Self {
            source: Source::Ready(items.into_iter().collect()),
        }
    }

    pub fn from_items(iter: impl Iterator<Item = Result<StreamItem, BackendError>> + Send + 'static) -> Self {
        Self {
            source: Source::Iter(Box::new(iter)),
        }
    }

    /// A stream fed from another thread. Blocking reads give up once
    /// `cancel` fires.
    pub fn channel(rx: Receiver<Result<StreamItem, BackendError>>, cancel: CancelToken) -> Self {
        Self {
            source: Source::Channel { rx, cancel },
        }
    }

    pub fn poll(&mut self) -> Polled {
        match &mut self.source {
            Source::Ready(q) => q.pop_front().map_or(Polled::Finished, |i| Polled::Item(Ok(i))),
            Source::Iter(it) => it.next().map_or(Polled::Finished, Polled::Item),
            Source::Channel { rx, .. } => match rx.try_recv() {
                Ok(item) => Polled::Item(item),
                Err(mpsc::TryRecvError::Empty) => Polled::Pending,
                Err(mpsc::TryRecvError::Disconnected) => Polled::Finished,
            },
        }
    }
}

impl Iterator for TurnStream {
    type Item = Result<StreamItem, BackendError>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.source {
            Source::Ready(q) => q.pop_front().map(Ok),
            Source::Iter(it) => it.next(),
            Source::Channel { rx, cancel } => loop {
                match rx.recv_timeout(Duration::from_millis(20)) {
                    Ok(item) => return Some(item),
                    Err(RecvTimeoutError::Timeout) if cancel.is_cancelled() => return None,
                    Err(RecvTimeoutError::Timeout) => continue,
                    Err(RecvTimeoutError::Disconnected) => return None,
                }
            },
        }
    }
}

pub trait Backend: Send + Sync {
    fn generate(&self, bundle: &PromptBundle, tools: &[ToolSpec], cancel: &CancelToken) -> Result<TurnStream, BackendError>;
}

/// One entry of a scripted fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureItem {
    Text {
        text: String,
        #[serde(default, rename = "delayMs")]
        delay_ms: u64,
    },
    Tool {
        tool: ToolInvocation,
        #[serde(default, rename = "delayMs")]
        delay_ms: u64,
    },
    Done {
        done: bool,
        #[serde(default, rename = "delayMs")]
        delay_ms: u64,
    },
}

impl FixtureItem {
    fn to_stream_item(&self) -> StreamItem {
        match self {
            FixtureItem::Text { text, delay_ms } => StreamItem {
                delay_ms: *delay_ms,
                event: StreamEvent::TextDelta { text: text.clone() },
            },
            FixtureItem::Tool { tool, delay_ms } => StreamItem {
                delay_ms: *delay_ms,
                event: StreamEvent::ToolCall { call: tool.clone() },
            },
            FixtureItem::Done { delay_ms, .. } => StreamItem {
                delay_ms: *delay_ms,
                event: StreamEvent::Done,
            },
        }
    }
}

/// Deterministic backend: fingerprint → canned stream.
///
/// Lookup tries the exact fingerprint first, then a `messageType:<type>`
/// fallback entry, so one fixture can cover every turn of a given kind.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    scripts: BTreeMap<String, Vec<FixtureItem>>,
    requested: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(scripts: BTreeMap<String, Vec<FixtureItem>>) -> Self {
        Self {
            scripts,
            requested: Mutex::new(Vec::new()),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, BackendError> {
        let scripts = serde_json::from_str(json).map_err(|e| BackendError::Fixture(e.to_string()))?;
        Ok(Self::new(scripts))
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn fallback_key(message_type: &str) -> String {
        format!("messageType:{message_type}")
    }

    pub fn insert(&mut self, key: impl Into<String>, items: Vec<FixtureItem>) {
        self.scripts.insert(key.into(), items);
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.scripts.keys().map(String::as_str)
    }

    /// Fingerprints requested so far, in order.
    pub fn requested_keys(&self) -> Vec<String> {
        self.requested.lock().map(|r| r.clone()).unwrap_or_default()
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, bundle: &PromptBundle, _tools: &[ToolSpec], _cancel: &CancelToken) -> Result<TurnStream, BackendError> {
        let key = fingerprint(bundle);
        if let Ok(mut r) = self.requested.lock() {
            r.push(key.clone());
        }
        let message_type = bundle.message_type.as_str();
        let items = self
            .scripts
            .get(&key)
            .or_else(|| self.scripts.get(&Self::fallback_key(message_type)))
            .ok_or_else(|| BackendError::NoScript {
                key: key.clone(),
                message_type: message_type.to_owned(),
            })?;
        Ok(TurnStream::ready(items.iter().map(FixtureItem::to_stream_item)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LiveBackendConfig {
    pub endpoint_url: String,
    pub key_env_var: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_scheme")]
    pub auth_scheme: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_model() -> String {
    "gpt-4-0613".to_owned()
}

fn default_auth_header() -> String {
    "Authorization".to_owned()
}

fn default_auth_scheme() -> String {
    "Bearer".to_owned()
}

fn default_timeout() -> u64 {
    60_000
}

/// OpenAI-compatible chat-completions client with function calling.
#[derive(Debug, Clone)]
pub struct LiveBackend {
    config: LiveBackendConfig,
    api_key: String,
}

impl LiveBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: LiveBackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.key_env_var).map_err(|_| BackendError::MissingKey(config.key_env_var.clone()))?;
        Ok(Self { config, api_key })
    }

    pub fn request_body(&self, bundle: &PromptBundle, tools: &[ToolSpec]) -> Value {
        let mut messages = vec![json!({"role": "system", "content": bundle.system_prompt})];
        for m in &bundle.memory {
            let role = match m.author {
                crate::document::Author::User => "user",
                crate::document::Author::Agent => "assistant",
            };
            messages.push(json!({"role": role, "content": m.text}));
        }
        messages.push(json!({"role": "user", "content": bundle.render_user_content()}));
        let mut body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": messages,
        });
        if !tools.is_empty() {
            body["tools"] = Value::Array(
                tools
                    .iter()
                    .map(|t| json!({"type": "function", "function": {"name": t.name, "description": t.description, "parameters": t.parameters}}))
                    .collect(),
            );
        }
        body
    }
}

/// Converts a chat-completions response body into stream items.
pub fn parse_completion(body: &Value) -> Result<Vec<StreamItem>, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Parse("missing choices[0].message".into()))?;
    let mut items = Vec::new();
    if let Some(text) = message.get("content").and_then(Value::as_str) {
        if !text.is_empty() {
            items.push(StreamItem::text(text));
        }
    }
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| BackendError::Parse("tool call without a name".into()))?;
            let args = call.pointer("/function/arguments").cloned().unwrap_or(Value::Null);
            let arguments = match args {
                Value::String(s) => serde_json::from_str(&s).map_err(|e| BackendError::Parse(format!("arguments of {name}: {e}")))?,
                other => other,
            };
            items.push(StreamItem::now(StreamEvent::ToolCall {
                call: ToolInvocation {
                    name: name.to_owned(),
                    arguments,
                },
            }));
        }
    }
    items.push(StreamItem::now(StreamEvent::Done));
    Ok(items)
}

impl Backend for LiveBackend {
    fn generate(&self, bundle: &PromptBundle, tools: &[ToolSpec], cancel: &CancelToken) -> Result<TurnStream, BackendError> {
        let body = self.request_body(bundle, tools);
        let config = self.config.clone();
        let auth = format!("{} {}", config.auth_scheme, self.api_key).trim().to_owned();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let result = (|| {
                let client = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(config.timeout_ms))
                    .build()
                    .map_err(|e| BackendError::Transport(e.to_string()))?;
                let response = client
                    .post(&config.endpoint_url)
                    .header(config.auth_header.as_str(), auth)
                    .json(&body)
                    .send()
                    .map_err(|e| BackendError::Transport(e.to_string()))?;
                let status = response.status();
                let value: Value = response.json().map_err(|e| BackendError::Parse(e.to_string()))?;
                if !status.is_success() {
                    return Err(BackendError::Transport(format!("HTTP {status}: {value}")));
                }
                parse_completion(&value)
            })();
            match result {
                Ok(items) => {
                    for item in items {
                        if tx.send(Ok(item)).is_err() {
                            break;
                        }
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                }
            }
        });
        Ok(TurnStream::channel(rx, cancel.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_items_parse() {
        let json = r#"{
            "messageType:idle": [
                {"text": "stuck?", "delayMs": 100},
                {"tool": {"name": "insertCode", "arguments": {"afterLine": 0, "text": "x = 1"}}},
                {"done": true}
            ]
        }"#;
        let b = ScriptedBackend::from_json(json).unwrap();
        assert_eq!(b.keys().collect::<Vec<_>>(), vec!["messageType:idle"]);
        let items = &b.scripts["messageType:idle"];
        assert_eq!(items[0].to_stream_item().delay_ms, 100);
        assert!(matches!(items[1].to_stream_item().event, StreamEvent::ToolCall { .. }));
        assert_eq!(items[2].to_stream_item().event, StreamEvent::Done);
    }

    #[test]
    fn completion_parsing() {
        let body = json!({"choices": [{"message": {
            "content": "on it",
            "tool_calls": [{"type": "function", "function": {"name": "deleteCode", "arguments": "{\"range\":{\"start\":{\"line\":0,\"column\":0},\"end\":{\"line\":0,\"column\":1}}}"}}]
        }}]});
        let items = parse_completion(&body).unwrap();
        assert_eq!(items.len(), 3);
        assert_eq!(items[0], StreamItem::text("on it"));
        match &items[1].event {
            StreamEvent::ToolCall { call } => assert_eq!(call.arguments["range"]["end"]["column"], 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_completion(&json!({})).is_err());
    }

    #[test]
    fn missing_key_names_variable() {
        let cfg = LiveBackendConfig {
            endpoint_url: "http://127.0.0.1:9/v1/chat/completions".into(),
            key_env_var: "PAIRLOOP_TEST_KEY_THAT_IS_NOT_SET".into(),
            model: default_model(),
            auth_header: default_auth_header(),
            auth_scheme: default_auth_scheme(),
            timeout_ms: 100,
        };
        assert_eq!(
            LiveBackend::from_env(cfg).unwrap_err(),
            BackendError::MissingKey("PAIRLOOP_TEST_KEY_THAT_IS_NOT_SET".into())
        );
    }

    #[test]
    fn channel_stream_gives_up_on_cancel() {
        let (_tx, rx) = mpsc::channel::<Result<StreamItem, BackendError>>();
        let cancel = CancelToken::new();
        let mut stream = TurnStream::channel(rx, cancel.clone());
        assert!(matches!(stream.poll(), Polled::Pending));
        let c = cancel.clone();
        std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(30));
            c.cancel();
        });
        assert!(stream.next().is_none());
    }
}
