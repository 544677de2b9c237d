//! Frames exchanged between the session server and editor clients, one JSON
//! object per line.

use serde::{Deserialize, Serialize};

use crate::context::Breakout;
use crate::document::{ChatScope, Position, Range, TextEdit};
use crate::exec::ExecutionResult;
use crate::policy::ConditionProfile;
use crate::presence::PresencePatch;
use crate::trigger::{EditOrigin, TriggerKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type")]
pub enum ClientFrame {
    #[serde(rename_all = "camelCase")]
    OpenSession {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_text: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task_id: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    Edit {
        base_version: u64,
        range: Range,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<EditOrigin>,
    },
    CaretMove {
        position: Position,
    },
    SelectionChange {
        range: Range,
    },
    Execute,
    #[serde(rename_all = "camelCase")]
    UserMessage {
        text: String,
        #[serde(default)]
        scope: ChatScope,
        /// When the user started typing the message, if the client tracks it.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        compose_start_ms: Option<u64>,
    },
    CreateBreakout {
        line: usize,
    },
    AckAgentEdit {
        version: u64,
    },
}

impl ClientFrame {
    pub fn type_name(&self) -> &'static str {
        match self {
            ClientFrame::OpenSession { .. } => "openSession",
            ClientFrame::Edit { .. } => "edit",
            ClientFrame::CaretMove { .. } => "caretMove",
            ClientFrame::SelectionChange { .. } => "selectionChange",
            ClientFrame::Execute => "execute",
            ClientFrame::UserMessage { .. } => "userMessage",
            ClientFrame::CreateBreakout { .. } => "createBreakout",
            ClientFrame::AckAgentEdit { .. } => "ackAgentEdit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TurnStatus {
    /// Detected but the profile does not allow this trigger.
    NotAdmitted,
    /// Admitted but lost arbitration or the agent was busy.
    Dropped,
    Started,
    Cancelled,
    NoResponse,
    Delivered,
    Failed,
    /// A tool call or grouping request from the turn was refused.
    ActionRejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TurnKind {
    Trigger,
    Reply,
    Grouping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ErrorCode {
    Protocol,
    StaleVersion,
    InvalidRange,
    InvalidLine,
    FeatureDisabled,
    UnknownBreakout,
    ExecutionBusy,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type")]
pub enum ServerFrame {
    #[serde(rename_all = "camelCase")]
    SessionOpened {
        session_id: String,
        version: u64,
        text: String,
        profile: ConditionProfile,
    },
    EditAccepted {
        version: u64,
    },
    UserMessagePosted {
        id: u64,
        scope: ChatScope,
        text: String,
    },
    AgentMessage {
        id: u64,
        scope: ChatScope,
        text: String,
    },
    #[serde(rename_all = "camelCase")]
    AgentEditApplied {
        edit: TextEdit,
        new_version: u64,
    },
    PresencePatch {
        presence: PresencePatch,
    },
    BreakoutCreated {
        breakout: Breakout,
    },
    MessagesGrouped {
        breakout: Breakout,
    },
    ExecutionResult {
        result: ExecutionResult,
    },
    TriggerDiagnostic {
        turn: TurnKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trigger: Option<TriggerKind>,
        status: TurnStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    Error {
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        current_version: Option<u64>,
    },
}

impl ServerFrame {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerFrame::Error {
            code,
            message: message.into(),
            current_version: None,
        }
    }

    /// Frames that carry something the agent did.
    pub fn is_agent_action(&self) -> bool {
        matches!(
            self,
            ServerFrame::AgentMessage { .. } | ServerFrame::AgentEditApplied { .. } | ServerFrame::MessagesGrouped { .. }
        )
    }
}

/// A server frame with its position in the session's output order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEnvelope {
    pub seq: u64,
    pub t: u64,
    pub frame: ServerFrame,
}
