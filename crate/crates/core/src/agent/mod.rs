//! Prompt assembly, tool schema, and conversion of model output into agent
//! actions.

pub mod backend;
pub mod prompts;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{Backend, BackendError, LiveBackend, LiveBackendConfig, ScriptedBackend, StreamEvent, StreamItem, ToolInvocation, TurnStream};

use crate::context::ContextStore;
use crate::document::{Author, ChatScope, Document, Position, Range};
use crate::policy::{CancelToken, ConditionProfile};

pub const DEFAULT_MEMORY_WINDOW: usize = 30;
pub const MAX_MESSAGES_PER_TURN: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("unknown message type {0:?}")]
    UnknownMessageType(String),
    #[error("backend failure: {0}")]
    BackendFailure(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MessageType {
    Query,
    BreakoutQuery,
    Idle,
    Completed,
    Commented,
    MultiLineChange,
    Selected,
    Breakout,
}

impl MessageType {
    pub const ALL: [MessageType; 8] = [
        MessageType::Query,
        MessageType::BreakoutQuery,
        MessageType::Idle,
        MessageType::Completed,
        MessageType::Commented,
        MessageType::MultiLineChange,
        MessageType::Selected,
        MessageType::Breakout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Query => "query",
            MessageType::BreakoutQuery => "breakoutQuery",
            MessageType::Idle => "idle",
            MessageType::Completed => "completed",
            MessageType::Commented => "commented",
            MessageType::MultiLineChange => "multiLineChange",
            MessageType::Selected => "selected",
            MessageType::Breakout => "breakout",
        }
    }

    pub fn parse(name: &str) -> Result<Self, AgentError> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == name)
            .ok_or_else(|| AgentError::UnknownMessageType(name.to_owned()))
    }

    /// Prompt case for a trigger. Executions reuse the query case.
    pub fn for_trigger(kind: crate::trigger::TriggerKind) -> Self {
        use crate::trigger::TriggerKind as K;
        match kind {
            K::Idle => MessageType::Idle,
            K::BlockCompleted => MessageType::Completed,
            K::CommentNewline => MessageType::Commented,
            K::MultiLineChange => MessageType::MultiLineChange,
            K::SelectionHold => MessageType::Selected,
            K::Executed => MessageType::Query,
        }
    }
}

pub fn action_prompt(message_type: MessageType, proactive: bool) -> &'static str {
    match message_type {
        MessageType::Query | MessageType::BreakoutQuery if proactive => prompts::QUERY_PROACTIVE,
        MessageType::Query | MessageType::BreakoutQuery => prompts::QUERY_NON_PROACTIVE,
        MessageType::Idle => prompts::IDLE,
        MessageType::Completed => prompts::COMPLETED,
        MessageType::Commented => prompts::COMMENTED,
        MessageType::MultiLineChange => prompts::MULTI_LINE_CHANGE,
        MessageType::Selected => prompts::SELECTED,
        MessageType::Breakout => prompts::BREAKOUT,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemoryEntry {
    pub id: u64,
    pub author: Author,
    pub text: String,
    /// Not part of the fingerprint.
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextBlock {
    pub file_text: String,
    pub caret_line: usize,
    pub caret_line_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preamble: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub console_tail: Option<String>,
    /// Code the trigger is about: the completed block, the comment, the
    /// pasted change.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focus_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PromptBundle {
    pub message_type: MessageType,
    pub system_prompt: String,
    pub memory: Vec<MemoryEntry>,
    pub action_prompt: String,
    pub context: ContextBlock,
}

impl PromptBundle {
    /// The final user turn sent to the model: action prompt, the user's own
    /// words when there are any, then the editor context.
    pub fn render_user_content(&self) -> String {
        let mut out = self.action_prompt.clone();
        let c = &self.context;
        if let Some(msg) = &c.user_message {
            if !out.ends_with("User: ") {
                out.push_str("\n\nUser: ");
            }
            out.push_str(msg);
        }
        out.push_str("\n\n");
        if let Some(p) = &c.preamble {
            out.push_str(p);
            out.push('\n');
        }
        if let Some(console) = &c.console_tail {
            out.push_str("Console output:\n```\n");
            out.push_str(console);
            if !console.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("```\n");
        }
        out.push_str("Current file (line numbers start at 0):\n```python\n");
        for (i, line) in c.file_text.split('\n').enumerate() {
            out.push_str(&format!("{i}: {line}\n"));
        }
        out.push_str("```\n");
        out.push_str(&format!("The user's caret is on line {}: `{}`\n", c.caret_line, c.caret_line_text));
        if let Some(sel) = &c.selection_text {
            out.push_str(&format!("Selected code:\n```python\n{sel}\n```\n"));
        }
        if let Some(focus) = &c.focus_text {
            out.push_str(&format!("Relevant code:\n```python\n{focus}\n```\n"));
        }
        if let Some(anchor) = c.anchor_line {
            out.push_str(&format!("This conversation is anchored to line {anchor}.\n"));
        }
        out
    }
}

/// Session state a prompt is built from.
#[derive(Debug, Clone)]
pub struct PromptInput<'a> {
    pub doc: &'a Document,
    pub caret: Position,
    pub selection: Option<Range>,
    pub memory: Vec<MemoryEntry>,
    pub memory_window: usize,
    pub console_tail: Option<String>,
    pub focus_text: Option<String>,
    pub anchor_line: Option<usize>,
    pub user_message: Option<String>,
    /// Set for execution-triggered turns.
    pub executed: bool,
}

impl<'a> PromptInput<'a> {
    pub fn new(doc: &'a Document, caret: Position) -> Self {
        Self {
            doc,
            caret,
            selection: None,
            memory: Vec::new(),
            memory_window: DEFAULT_MEMORY_WINDOW,
            console_tail: None,
            focus_text: None,
            anchor_line: None,
            user_message: None,
            executed: false,
        }
    }
}

pub fn build_prompt(message_type: MessageType, input: &PromptInput<'_>, profile: &ConditionProfile) -> PromptBundle {
    let keep = input.memory.len().saturating_sub(input.memory_window);
    let caret_line_text = input.doc.line(input.caret.line).unwrap_or_default().to_owned();
    PromptBundle {
        message_type,
        system_prompt: prompts::SYSTEM_PROMPT.to_owned(),
        memory: input.memory[keep..].to_vec(),
        action_prompt: action_prompt(message_type, profile.agent_can_edit_document).to_owned(),
        context: ContextBlock {
            file_text: input.doc.text().to_owned(),
            caret_line: input.caret.line,
            caret_line_text,
            selection_text: input
                .selection
                .filter(|r| !r.is_empty())
                .and_then(|r| input.doc.slice(r))
                .map(str::to_owned),
            preamble: input.executed.then(|| prompts::EXECUTED_PREAMBLE.to_owned()),
            console_tail: input.console_tail.clone(),
            focus_text: input.focus_text.clone(),
            anchor_line: input.anchor_line,
            user_message: input.user_message.clone(),
        },
    }
}

/// Same as [`build_prompt`], keyed by the wire name of the message type.
pub fn build_prompt_named(message_type: &str, input: &PromptInput<'_>, profile: &ConditionProfile) -> Result<PromptBundle, AgentError> {
    Ok(build_prompt(MessageType::parse(message_type)?, input, profile))
}

/// Stable request key: equal bundles give equal keys, timestamps excluded.
pub fn fingerprint(bundle: &PromptBundle) -> String {
    let memory: Vec<Value> = bundle
        .memory
        .iter()
        .map(|m| json!({"author": m.author, "text": m.text}))
        .collect();
    let canonical = json!({
        "messageType": bundle.message_type,
        "system": bundle.system_prompt,
        "action": bundle.action_prompt,
        "memory": memory,
        "context": bundle.context,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    hex::encode(&digest[..16])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Value,
}

fn position_schema() -> Value {
    json!({"type": "object", "properties": {"line": {"type": "integer", "minimum": 0}, "column": {"type": "integer", "minimum": 0}}, "required": ["line", "column"]})
}

fn range_schema() -> Value {
    json!({"type": "object", "properties": {"start": position_schema(), "end": position_schema()}, "required": ["start", "end"]})
}

/// The four editor tools. Code tools need edit rights, grouping needs
/// breakouts.
pub fn tool_specs(can_edit: bool, can_group: bool) -> Vec<ToolSpec> {
    let mut tools = Vec::new();
    if can_edit {
        tools.push(ToolSpec {
            name: "insertCode",
            description: "Insert lines of code after the given 0-based line (-1 inserts at the top of the file).",
            parameters: json!({"type": "object", "properties": {"afterLine": {"type": "integer", "minimum": -1}, "text": {"type": "string"}}, "required": ["afterLine", "text"]}),
        });
        tools.push(ToolSpec {
            name: "deleteCode",
            description: "Delete the code in the given range.",
            parameters: json!({"type": "object", "properties": {"range": range_schema()}, "required": ["range"]}),
        });
        tools.push(ToolSpec {
            name: "replaceCode",
            description: "Replace the code in the given range with new text.",
            parameters: json!({"type": "object", "properties": {"range": range_schema(), "text": {"type": "string"}}, "required": ["range", "text"]}),
        });
    }
    if can_group {
        tools.push(ToolSpec {
            name: "selectMessages",
            description: "Move the chat messages fromId..toId into a breakout thread anchored at a code line, with a short summary.",
            parameters: json!({"type": "object", "properties": {
                "fromId": {"type": "integer"}, "toId": {"type": "integer"},
                "summary": {"type": "string"}, "anchorLine": {"type": "integer", "minimum": 0}
            }, "required": ["fromId", "toId", "summary", "anchorLine"]}),
        });
    }
    tools
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "name", content = "arguments")]
pub enum ToolCall {
    #[serde(rename_all = "camelCase")]
    InsertCode { after_line: i64, text: String },
    DeleteCode { range: Range },
    ReplaceCode { range: Range, text: String },
    #[serde(rename_all = "camelCase")]
    SelectMessages { from_id: u64, to_id: u64, summary: String, anchor_line: usize },
}

impl ToolCall {
    pub fn from_invocation(call: &ToolInvocation) -> Result<Self, String> {
        serde_json::from_value(json!({"name": call.name, "arguments": call.arguments})).map_err(|e| format!("tool {}: {e}", call.name))
    }

    pub fn is_code_tool(&self) -> bool {
        !matches!(self, ToolCall::SelectMessages { .. })
    }

    /// Checks a code tool against a document version.
    pub fn validate_code(&self, doc: &Document) -> Result<(), String> {
        crate::presence::atomic_edit(self, doc).map(|_| ()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum AgentAction {
    SendMessage { text: String, scope: ChatScope },
    #[serde(rename_all = "camelCase")]
    EditCode { tool: ToolCall, base_version: u64 },
    #[serde(rename_all = "camelCase")]
    GroupMessages { from_id: u64, to_id: u64, summary: String, anchor_line: usize },
    NoResponse,
}

/// What a turn may do, checked when its output is interpreted.
#[derive(Debug, Clone, Copy)]
pub struct TurnEnv<'a> {
    pub doc: &'a Document,
    pub store: &'a ContextStore,
    pub can_edit: bool,
    pub can_group: bool,
    pub scope: &'a ChatScope,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TurnOutput {
    pub actions: Vec<AgentAction>,
    pub diagnostics: Vec<String>,
}

/// Splits model text into chat messages on blank lines, keeping fenced code
/// blocks whole.
pub fn split_messages(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut in_fence = false;
    for line in text.split('\n') {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
        }
        if !in_fence && line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n").trim().to_owned());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n").trim().to_owned());
    }
    out.retain(|m| !m.is_empty());
    out
}

enum Segment {
    Text(String),
    Tool(ToolInvocation),
}

/// Interprets a complete stream: NO_RESPONSE handling, message splitting
/// with the per-turn cap, and tool-call validation.
pub fn interpret_stream(events: &[StreamEvent], env: &TurnEnv<'_>) -> TurnOutput {
    let mut out = TurnOutput::default();
    let full_text: String = events
        .iter()
        .filter_map(|e| match e {
            StreamEvent::TextDelta { text } => Some(text.as_str()),
            _ => None,
        })
        .collect();
    if full_text.trim() == prompts::NO_RESPONSE {
        out.actions.push(AgentAction::NoResponse);
        return out;
    }

    let mut segments: Vec<Segment> = Vec::new();
    for e in events {
        match e {
            StreamEvent::TextDelta { text } => match segments.last_mut() {
                Some(Segment::Text(buf)) => buf.push_str(text),
                _ => segments.push(Segment::Text(text.clone())),
            },
            StreamEvent::ToolCall { call } => segments.push(Segment::Tool(call.clone())),
            StreamEvent::Done => break,
        }
    }

    let mut sent = 0;
    for seg in segments {
        match seg {
            Segment::Text(text) => {
                for msg in split_messages(&text) {
                    if sent == MAX_MESSAGES_PER_TURN {
                        out.diagnostics.push("message cap reached; extra message dropped".into());
                        continue;
                    }
                    sent += 1;
                    out.actions.push(AgentAction::SendMessage {
                        text: msg,
                        scope: env.scope.clone(),
                    });
                }
            }
            Segment::Tool(call) => match validate_tool(&call, env) {
                Ok(action) => out.actions.push(action),
                Err(diag) => out.diagnostics.push(diag),
            },
        }
    }
    out
}

fn validate_tool(call: &ToolInvocation, env: &TurnEnv<'_>) -> Result<AgentAction, String> {
    let tool = ToolCall::from_invocation(call)?;
    match tool {
        ToolCall::SelectMessages {
            from_id,
            to_id,
            summary,
            anchor_line,
        } => {
            if !env.can_group {
                return Err("selectMessages rejected: breakouts disabled".into());
            }
            let global_uncollapsed = |id: u64| {
                env.store
                    .message(id)
                    .is_some_and(|m| m.scope == ChatScope::Global && m.collapsed_into.is_none())
            };
            if from_id > to_id || !global_uncollapsed(from_id) || !global_uncollapsed(to_id) {
                return Err(format!("selectMessages rejected: invalid message range {from_id}..={to_id}"));
            }
            if anchor_line >= env.doc.line_count() {
                return Err(format!("selectMessages rejected: anchor line {anchor_line} outside document"));
            }
            if summary.trim().is_empty() {
                return Err("selectMessages rejected: empty summary".into());
            }
            Ok(AgentAction::GroupMessages {
                from_id,
                to_id,
                summary,
                anchor_line,
            })
        }
        code => {
            if !env.can_edit {
                return Err(format!("{} rejected: agent may not edit the document", call.name));
            }
            code.validate_code(env.doc).map_err(|e| format!("{} rejected: {e}", call.name))?;
            Ok(AgentAction::EditCode {
                tool: code,
                base_version: env.doc.version(),
            })
        }
    }
}

/// Runs one model turn to completion. A cancellation observed at any point
/// yields no actions at all.
pub fn run_turn(bundle: &PromptBundle, backend: &dyn Backend, cancel: &CancelToken, env: &TurnEnv<'_>) -> Result<TurnOutput, AgentError> {
    let tools = tool_specs(env.can_edit, env.can_group);
    let stream = backend.generate(bundle, &tools, cancel)?;
    let mut events = Vec::new();
    for item in stream {
        if cancel.is_cancelled() {
            return Ok(TurnOutput::default());
        }
        let item = item?;
        let done = item.event == StreamEvent::Done;
        events.push(item.event);
        if done {
            break;
        }
    }
    if cancel.is_cancelled() {
        return Ok(TurnOutput::default());
    }
    Ok(interpret_stream(&events, env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Author;

    fn doc() -> Document {
        Document::new("d", "def f():\n\tx = 1\n")
    }

    fn input(doc: &Document) -> PromptInput<'_> {
        PromptInput::new(doc, Position::new(1, 3))
    }

    #[test]
    fn prompt_cases() {
        let d = doc();
        let full = ConditionProfile::codellaborator();
        let b = build_prompt(MessageType::Completed, &input(&d), &full);
        assert!(b.action_prompt.contains("If the completed block is too small or insignificant to comment on"));
        assert!(b.action_prompt.contains("respond \"NO_RESPONSE\""));
        let b = build_prompt(MessageType::Query, &input(&d), &ConditionProfile::prompt_only());
        assert!(b.action_prompt.contains("explain that you are not able to do that"));
        let b = build_prompt(MessageType::Idle, &input(&d), &full);
        assert!(b.action_prompt.contains("The user may be stuck on a line of code."));
        assert!(b.system_prompt.contains("act as a partner to the user in a pair programming session"));
        assert_eq!(
            build_prompt_named("bogus", &input(&d), &full).unwrap_err(),
            AgentError::UnknownMessageType("bogus".into())
        );
    }

    #[test]
    fn executed_turn_has_preamble() {
        let d = doc();
        let mut i = input(&d);
        i.executed = true;
        i.console_tail = Some("Traceback ...".into());
        let b = build_prompt(MessageType::Query, &i, &ConditionProfile::codellaborator());
        let text = b.render_user_content();
        assert!(text.contains("The user has just executed the program.\nConsole output:"));
    }

    #[test]
    fn memory_window_keeps_latest() {
        let d = doc();
        let mut i = input(&d);
        i.memory = (0..40)
            .map(|n| MemoryEntry { id: n, author: Author::User, text: format!("m{n}"), timestamp_ms: n })
            .collect();
        let b = build_prompt(MessageType::Query, &i, &ConditionProfile::codellaborator());
        assert_eq!(b.memory.len(), 30);
        assert_eq!(b.memory[0].text, "m10");
    }

    #[test]
    fn fingerprint_rules() {
        let d = doc();
        let p = ConditionProfile::codellaborator();
        let a = build_prompt(MessageType::Idle, &input(&d), &p);
        assert_eq!(fingerprint(&a), fingerprint(&build_prompt(MessageType::Idle, &input(&d), &p)));
        let mut moved = input(&d);
        moved.caret = Position::new(0, 0);
        assert_ne!(fingerprint(&a), fingerprint(&build_prompt(MessageType::Idle, &moved, &p)));
        let mut early = a.clone();
        let mut late = a.clone();
        early.memory.push(MemoryEntry { id: 1, author: Author::User, text: "hi".into(), timestamp_ms: 1 });
        late.memory.push(MemoryEntry { id: 1, author: Author::User, text: "hi".into(), timestamp_ms: 99_999 });
        assert_eq!(fingerprint(&early), fingerprint(&late));
    }

    #[test]
    fn message_splitting_keeps_code_fences() {
        let text = "first\n\nsecond:\n```python\na = 1\n\nb = 2\n```\n\n\nthird";
        assert_eq!(split_messages(text), vec!["first", "second:\n```python\na = 1\n\nb = 2\n```", "third"]);
    }

    fn env<'a>(doc: &'a Document, store: &'a ContextStore, scope: &'a ChatScope) -> TurnEnv<'a> {
        TurnEnv { doc, store, can_edit: true, can_group: true, scope }
    }

    #[test]
    fn interpretation_rules() {
        let d = doc();
        let store = ContextStore::new(true);
        let scope = ChatScope::Global;
        let e = env(&d, &store, &scope);
        let no = interpret_stream(&[StreamEvent::TextDelta { text: "  NO_RESPONSE\n".into() }], &e);
        assert_eq!(no.actions, vec![AgentAction::NoResponse]);

        let five = "a\n\nb\n\nc\n\nd\n\ne";
        let out = interpret_stream(&[StreamEvent::TextDelta { text: five.into() }], &e);
        assert_eq!(out.actions.len(), 3);

        let insert = ToolInvocation { name: "insertCode".into(), arguments: json!({"afterLine": 1, "text": "\ty = 2"}) };
        let out = interpret_stream(
            &[StreamEvent::TextDelta { text: "adding y".into() }, StreamEvent::ToolCall { call: insert.clone() }, StreamEvent::Done],
            &e,
        );
        assert!(matches!(out.actions[0], AgentAction::SendMessage { .. }));
        assert!(matches!(out.actions[1], AgentAction::EditCode { base_version: 0, .. }));

        let bad = ToolInvocation { name: "deleteCode".into(), arguments: json!({"range": {"start": {"line": 9, "column": 0}, "end": {"line": 9, "column": 1}}}) };
        let out = interpret_stream(&[StreamEvent::TextDelta { text: "kept".into() }, StreamEvent::ToolCall { call: bad }], &e);
        assert_eq!(out.actions.len(), 1);
        assert_eq!(out.diagnostics.len(), 1);

        let no_edit = TurnEnv { can_edit: false, ..e };
        let out = interpret_stream(&[StreamEvent::ToolCall { call: insert }], &no_edit);
        assert!(out.actions.is_empty());
        assert!(out.diagnostics[0].contains("may not edit"));
    }

    #[test]
    fn tool_schema_shape() {
        let names: Vec<_> = tool_specs(true, true).iter().map(|t| t.name).collect();
        assert_eq!(names, ["insertCode", "deleteCode", "replaceCode", "selectMessages"]);
        assert!(tool_specs(false, false).is_empty());
        let call = ToolCall::from_invocation(&ToolInvocation {
            name: "selectMessages".into(),
            arguments: json!({"fromId": 1, "toId": 2, "summary": "s", "anchorLine": 0}),
        })
        .unwrap();
        assert_eq!(call, ToolCall::SelectMessages { from_id: 1, to_id: 2, summary: "s".into(), anchor_line: 0 });
    }
}
