//! Intervention arbitration.
//!
//! Decides which detected triggers may reach the agent under a condition
//! profile, which one runs when several fire together, what user actions
//! cancel, and how a finished interaction episode is labelled.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::document::ChatScope;
use crate::trigger::{Trigger, TriggerKind};

pub const DEFAULT_ENGAGEMENT_WINDOW_MS: u64 = 60_000;

/// Default start order when triggers fire together, highest first.
pub const DEFAULT_PRIORITY: [TriggerKind; 6] = [
    TriggerKind::CommentNewline,
    TriggerKind::Executed,
    TriggerKind::MultiLineChange,
    TriggerKind::BlockCompleted,
    TriggerKind::SelectionHold,
    TriggerKind::Idle,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileName {
    PromptOnly,
    CodeGhost,
    Codellaborator,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConditionProfile {
    pub name: ProfileName,
    pub proactive_triggers: BTreeSet<TriggerKind>,
    pub agent_can_edit_document: bool,
    pub presence_enabled: bool,
    pub breakouts_enabled: bool,
}

impl ConditionProfile {
    /// Responds to chat and in-line comments only; code arrives as snippets.
    pub fn prompt_only() -> Self {
        Self {
            name: ProfileName::PromptOnly,
            proactive_triggers: [TriggerKind::CommentNewline].into_iter().collect(),
            agent_can_edit_document: false,
            presence_enabled: false,
            breakouts_enabled: false,
        }
    }

    /// Fully proactive, but invisible: no presence cues, no breakouts.
    pub fn code_ghost() -> Self {
        Self {
            name: ProfileName::CodeGhost,
            proactive_triggers: TriggerKind::ALL.into_iter().collect(),
            agent_can_edit_document: true,
            presence_enabled: false,
            breakouts_enabled: false,
        }
    }

    pub fn codellaborator() -> Self {
        Self {
            name: ProfileName::Codellaborator,
            proactive_triggers: TriggerKind::ALL.into_iter().collect(),
            agent_can_edit_document: true,
            presence_enabled: true,
            breakouts_enabled: true,
        }
    }

    pub fn preset(name: ProfileName) -> Option<Self> {
        match name {
            ProfileName::PromptOnly => Some(Self::prompt_only()),
            ProfileName::CodeGhost => Some(Self::code_ghost()),
            ProfileName::Codellaborator => Some(Self::codellaborator()),
            ProfileName::Custom => None,
        }
    }
}

impl Default for ConditionProfile {
    fn default() -> Self {
        Self::codellaborator()
    }
}

/// Config form of a profile: a preset name or a full custom definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(ProfileName),
    Custom(ConditionProfile),
}

impl ProfileSpec {
    pub fn resolve(&self) -> Result<ConditionProfile, String> {
        match self {
            ProfileSpec::Named(name) => {
                ConditionProfile::preset(*name).ok_or_else(|| "profile \"Custom\" needs a full definition".to_owned())
            }
            ProfileSpec::Custom(p) => Ok(p.clone()),
        }
    }
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Named(ProfileName::Codellaborator)
    }
}

pub fn admit(profile: &ConditionProfile, trigger: &Trigger) -> bool {
    profile.proactive_triggers.contains(&trigger.kind)
}

#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum TaskSource {
    Trigger { trigger: TriggerKind },
    UserMessage,
    /// Follow-up turn that organizes finished work into a breakout.
    Grouping,
}

impl TaskSource {
    pub fn is_proactive(&self) -> bool {
        !matches!(self, TaskSource::UserMessage)
    }
}

#[derive(Debug, Clone)]
pub struct PendingTask {
    pub id: u64,
    pub source: TaskSource,
    pub cancel: CancelToken,
    pub started_at_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Arbitration {
    pub start: Option<Trigger>,
    pub dropped: Vec<Trigger>,
}

/// Picks at most one trigger to start. Anything else is dropped, and a busy
/// agent drops everything.
pub fn arbitrate(admitted: Vec<Trigger>, in_flight: Option<&PendingTask>, priority: &[TriggerKind]) -> Arbitration {
    if in_flight.is_some() || admitted.is_empty() {
        return Arbitration {
            start: None,
            dropped: admitted,
        };
    }
    let rank = |k: TriggerKind| priority.iter().position(|p| *p == k).unwrap_or(priority.len());
    let best = admitted
        .iter()
        .enumerate()
        .min_by_key(|(i, t)| (rank(t.kind), *i))
        .map(|(i, _)| i)
        .expect("non-empty");
    let mut dropped = admitted;
    let start = dropped.remove(best);
    Arbitration {
        start: Some(start),
        dropped,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PolicyConfig {
    pub priority: Vec<TriggerKind>,
    pub engagement_window_ms: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            priority: DEFAULT_PRIORITY.to_vec(),
            engagement_window_ms: DEFAULT_ENGAGEMENT_WINDOW_MS,
        }
    }
}

/// User actions the policy cares about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserAction {
    Message,
    Edit,
    CaretMove,
    SelectionChange,
    Execute,
    OpenBreakout,
}

/// Owns the single agent task slot for a session.
#[derive(Debug, Default)]
pub struct Policy {
    config: PolicyConfig,
    in_flight: Option<PendingTask>,
    next_id: u64,
}

impl Policy {
    pub fn new(config: PolicyConfig) -> Self {
        Self {
            config,
            in_flight: None,
            next_id: 1,
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn in_flight(&self) -> Option<&PendingTask> {
        self.in_flight.as_ref()
    }

    pub fn arbitrate(&self, admitted: Vec<Trigger>) -> Arbitration {
        arbitrate(admitted, self.in_flight.as_ref(), &self.config.priority)
    }

    /// Claims the task slot. Any task still holding it is cancelled first.
    pub fn begin(&mut self, source: TaskSource, now_ms: u64) -> PendingTask {
        if let Some(old) = self.in_flight.take() {
            old.cancel.cancel();
        }
        let task = PendingTask {
            id: self.next_id,
            source,
            cancel: CancelToken::new(),
            started_at_ms: now_ms,
        };
        self.next_id += 1;
        self.in_flight = Some(task.clone());
        task
    }

    pub fn finish(&mut self, id: u64) {
        if self.in_flight.as_ref().is_some_and(|t| t.id == id) {
            self.in_flight = None;
        }
    }

    /// A chat message from the user cancels the in-flight agent task and its
    /// backend request. Editor activity never does: the agent keeps working
    /// in parallel.
    pub fn on_user_action(&mut self, action: UserAction) -> Vec<PendingTask> {
        match action {
            UserAction::Message => match self.in_flight.take() {
                Some(task) => {
                    task.cancel.cancel();
                    vec![task]
                }
                None => Vec::new(),
            },
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeClass {
    Engaged,
    Ignored,
    Disrupted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeOutcome {
    pub classification: EpisodeClass,
    pub engagement_window_ms: u64,
}

/// What the classifier needs to know about a closed episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeView {
    pub scope: ChatScope,
    /// When the agent finished delivering its output.
    pub output_done_ms: u64,
    pub has_agent_edits: bool,
    pub closed_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObservedKind {
    UserMessage { scope: ChatScope },
    /// A user edit that removed or replaced exactly the agent's inserted text.
    RevertedAgentEdit,
    Activity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedEvent {
    pub at_ms: u64,
    pub kind: ObservedKind,
}

/// Labels an episode from what the user did after the agent acted.
///
/// The first decisive event inside the engagement window wins: a reply in
/// the episode's scope is engagement, reverting the agent's edit is a
/// disruption. Without either, agent edits still standing once the window
/// has fully elapsed count as engagement; everything else was ignored.
pub fn classify_outcome(episode: &EpisodeView, subsequent: &[ObservedEvent], window_ms: u64) -> EpisodeOutcome {
    let window_end = episode.output_done_ms + window_ms;
    let outcome = |classification| EpisodeOutcome {
        classification,
        engagement_window_ms: window_ms,
    };
    for ev in subsequent.iter().filter(|e| e.at_ms <= window_end) {
        match &ev.kind {
            ObservedKind::UserMessage { scope } if *scope == episode.scope => return outcome(EpisodeClass::Engaged),
            ObservedKind::UserMessage { .. } => break,
            ObservedKind::RevertedAgentEdit => return outcome(EpisodeClass::Disrupted),
            ObservedKind::Activity => {}
        }
    }
    if episode.has_agent_edits && episode.closed_at_ms >= window_end {
        outcome(EpisodeClass::Engaged)
    } else {
        outcome(EpisodeClass::Ignored)
    }
}
