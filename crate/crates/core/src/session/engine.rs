//! The per-session state machine. Time only moves when the driver says so:
//! every entry point takes the current session time, and all pending work
//! (timers, streamed model output, typing ticks, highlight expiry, episode
//! windows) is processed in deadline order up to that time.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{
    build_prompt, interpret_stream, tool_specs, AgentAction, Backend, MemoryEntry, MessageType, PromptBundle, PromptInput,
    StreamEvent, StreamItem, ToolCall, TurnEnv, TurnStream,
};
use crate::agent::backend::Polled;
use crate::context::ContextStore;
use crate::document::{
    apply_edit, diff_line_shift, transform_range, Author, ChatScope, Document, EditorEvent, EventPayload, Position, Range,
    TextEdit,
};
use crate::exec::ExecutionResult;
use crate::policy::{
    admit, classify_outcome, ConditionProfile, EpisodeOutcome, EpisodeView, ObservedEvent, ObservedKind, PendingTask, Policy,
    TaskSource, UserAction,
};
use crate::presence::{atomic_edit, plan_steps, Bubble, ChoreographyRunner, EditChoreography, PresenceState};
use crate::trigger::{EditOrigin, TimerOutcome, Trigger, TriggerEngine, TriggerKind};

use super::config::{ConfigError, SessionConfig};
use super::wire::{ClientFrame, ErrorCode, ServerEnvelope, ServerFrame, TurnKind, TurnStatus};

/// One closed interaction episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub initiator: Author,
    pub start_ms: u64,
    pub end_ms: u64,
    /// Time the user spent composing the message that opened the episode.
    pub expression_ms: u64,
    /// Time from the end of the agent's output to the user's next action.
    pub interpretation_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_kind: Option<TriggerKind>,
    pub scope: ChatScope,
    pub outcome: EpisodeOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub programming_stage_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionOutput {
    Frame(ServerEnvelope),
    Episode(EpisodeRecord),
}

/// A program run the driver has to perform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionRequest {
    pub source: String,
    pub version: u64,
    pub requested_at_ms: u64,
}

#[derive(Debug, Clone)]
enum Purpose {
    Trigger(Box<Trigger>),
    Reply { message_id: u64, text: String },
    Grouping,
}

impl Purpose {
    fn kind(&self) -> TurnKind {
        match self {
            Purpose::Trigger(_) => TurnKind::Trigger,
            Purpose::Reply { .. } => TurnKind::Reply,
            Purpose::Grouping => TurnKind::Grouping,
        }
    }

    fn trigger(&self) -> Option<TriggerKind> {
        match self {
            Purpose::Trigger(t) => Some(t.kind),
            _ => None,
        }
    }
}

struct ActiveTurn {
    task: PendingTask,
    purpose: Purpose,
    scope: ChatScope,
    base_doc: Document,
    stream: TurnStream,
    next: Option<(u64, StreamItem)>,
    last_ms: u64,
    events: Vec<StreamEvent>,
    episode: Option<u64>,
}

struct QueuedEdit {
    source: ToolCall,
    edit: TextEdit,
    episode: Option<u64>,
}

struct RunningChoreography {
    runner: ChoreographyRunner,
    next_at: u64,
    episode: Option<u64>,
}

struct OpenEpisode {
    id: u64,
    initiator: Author,
    start_ms: u64,
    expression_ms: u64,
    trigger: Option<TriggerKind>,
    scope: ChatScope,
    /// Turns and edits still producing output for this episode.
    pending: u32,
    last_output_ms: Option<u64>,
    output_done_ms: Option<u64>,
    interpretation_ms: Option<u64>,
    agent_ranges: Vec<Range>,
    has_agent_edits: bool,
    observed: Vec<ObservedEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Due {
    Episode(u64),
    Highlight,
    Turn,
    Choreography,
    Timer,
}

pub struct Session {
    session_id: String,
    profile: ConditionProfile,
    backend: Arc<dyn Backend>,
    memory_window: usize,
    chars_per_tick: usize,
    tick_ms: u64,
    engagement_window_ms: u64,

    doc: Document,
    edit_log: Vec<TextEdit>,
    engine: TriggerEngine,
    policy: Policy,
    store: ContextStore,
    presence: PresenceState,

    clock: u64,
    seq: u64,
    last_activity_ms: u64,

    turn: Option<ActiveTurn>,
    edit_queue: VecDeque<QueuedEdit>,
    queue_ready_at: u64,
    choreography: Option<RunningChoreography>,

    exec_request: Option<ExecutionRequest>,
    exec_running: bool,

    episodes: Vec<OpenEpisode>,
    next_episode: u64,
}

impl Session {
    /// Opens a session on `initial_text` at session time `now`.
    pub fn open(config: &SessionConfig, backend: Arc<dyn Backend>, initial_text: &str, now: u64) -> Result<(Self, Vec<SessionOutput>), ConfigError> {
        let profile = config.resolve_profile()?;
        let mut engine = TriggerEngine::new(config.trigger_config());
        engine.start(now);
        let mut session = Session {
            session_id: config.session_id.clone(),
            presence: PresenceState::new(profile.presence_enabled),
            store: ContextStore::new(profile.breakouts_enabled),
            profile,
            backend,
            memory_window: config.memory_window,
            chars_per_tick: config.typing_rate.chars_per_tick,
            tick_ms: config.typing_rate.tick_ms,
            engagement_window_ms: config.engagement_window_ms,
            doc: Document::new(config.session_id.clone(), initial_text),
            edit_log: Vec::new(),
            engine,
            policy: Policy::new(config.policy_config()),
            clock: now,
            seq: 0,
            last_activity_ms: now,
            turn: None,
            edit_queue: VecDeque::new(),
            queue_ready_at: now,
            choreography: None,
            exec_request: None,
            exec_running: false,
            episodes: Vec::new(),
            next_episode: 1,
        };
        let mut out = Vec::new();
        let opened = ServerFrame::SessionOpened {
            session_id: session.session_id.clone(),
            version: session.doc.version(),
            text: session.doc.text().to_owned(),
            profile: session.profile.clone(),
        };
        session.emit(&mut out, opened);
        Ok((session, out))
    }

    pub fn profile(&self) -> &ConditionProfile {
        &self.profile
    }

    pub fn document(&self) -> &Document {
        &self.doc
    }

    pub fn store(&self) -> &ContextStore {
        &self.store
    }

    pub fn presence(&self) -> &PresenceState {
        &self.presence
    }

    pub fn trigger_engine(&self) -> &TriggerEngine {
        &self.engine
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn is_turn_streaming(&self) -> bool {
        self.turn.is_some()
    }

    pub fn open_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Earliest time at which the session has work to do on its own.
    pub fn next_deadline(&self) -> Option<u64> {
        self.next_due().map(|(t, _)| t)
    }

    /// Hands the next program run to the driver, which must report back
    /// through [`Session::execution_finished`].
    pub fn take_execution_request(&mut self) -> Option<ExecutionRequest> {
        self.exec_request.take()
    }

    pub fn handle(&mut self, frame: ClientFrame, now: u64) -> Vec<SessionOutput> {
        let mut out = Vec::new();
        if now < self.clock {
            let msg = format!("frame at {now}ms is earlier than session time {}ms", self.clock);
            self.emit(&mut out, ServerFrame::error(ErrorCode::Protocol, msg));
            return out;
        }
        self.run_until(now, &mut out);
        match frame {
            ClientFrame::OpenSession { .. } => {
                self.emit(&mut out, ServerFrame::error(ErrorCode::Protocol, "session is already open"));
            }
            ClientFrame::Edit { base_version, range, text, origin } => self.user_edit(base_version, range, text, origin, &mut out),
            ClientFrame::CaretMove { position } => {
                if !self.doc.is_valid_position(position) {
                    self.emit(&mut out, ServerFrame::error(ErrorCode::InvalidRange, format!("caret {position} outside document")));
                } else {
                    self.note_user_action(UserAction::CaretMove);
                    let ev = EditorEvent::new(self.clock, EventPayload::CaretMove { position });
                    self.feed_engine(&ev, None, &self.doc.clone(), &mut out);
                }
            }
            ClientFrame::SelectionChange { range } => {
                if !self.doc.is_valid_range(range) {
                    self.emit(&mut out, ServerFrame::error(ErrorCode::InvalidRange, format!("selection {range} outside document")));
                } else {
                    self.note_user_action(UserAction::SelectionChange);
                    let ev = EditorEvent::new(self.clock, EventPayload::SelectionChange { range });
                    self.feed_engine(&ev, None, &self.doc.clone(), &mut out);
                }
            }
            ClientFrame::Execute => self.execute(&mut out),
            ClientFrame::UserMessage { text, scope, compose_start_ms } => self.user_message(text, scope, compose_start_ms, &mut out),
            ClientFrame::CreateBreakout { line } => {
                self.note_user_action(UserAction::OpenBreakout);
                let line_count = self.doc.line_count();
                match self.store.create_breakout(line, line_count, Author::User, "", &[]) {
                    Ok(b) => {
                        let breakout = b.clone();
                        self.emit(&mut out, ServerFrame::BreakoutCreated { breakout });
                    }
                    Err(e) => {
                        let code = match e {
                            crate::context::ContextError::FeatureDisabled => ErrorCode::FeatureDisabled,
                            _ => ErrorCode::InvalidLine,
                        };
                        self.emit(&mut out, ServerFrame::error(code, e.to_string()));
                    }
                }
            }
            ClientFrame::AckAgentEdit { .. } => {}
        }
        self.run_until(now, &mut out);
        out
    }

    /// Answers a frame that could not be decoded.
    pub fn reject(&mut self, message: impl Into<String>, now: u64) -> Vec<SessionOutput> {
        let mut out = self.advance(now);
        self.emit(&mut out, ServerFrame::error(ErrorCode::Protocol, message));
        out
    }

    /// Processes everything due up to `now`.
    pub fn advance(&mut self, now: u64) -> Vec<SessionOutput> {
        let mut out = Vec::new();
        if now >= self.clock {
            self.run_until(now, &mut out);
        }
        out
    }

    pub fn execution_finished(&mut self, result: ExecutionResult, now: u64) -> Vec<SessionOutput> {
        let mut out = Vec::new();
        let now = now.max(self.clock);
        self.run_until(now, &mut out);
        self.exec_running = false;
        self.exec_request = None;
        let console = result.console();
        let failed = result.failed();
        self.emit(&mut out, ServerFrame::ExecutionResult { result });
        self.set_bubble(None, &mut out);
        let ev = EditorEvent::new(self.clock, EventPayload::Execute { console, failed });
        self.feed_engine(&ev, None, &self.doc.clone(), &mut out);
        self.run_until(now, &mut out);
        out
    }

    /// Runs agent output, typing and episode windows to completion without
    /// firing new triggers, then closes every open episode. Used when a
    /// recorded session ends without an explicit end time.
    pub fn drain(&mut self, max_steps: usize) -> Vec<SessionOutput> {
        let mut out = Vec::new();
        for _ in 0..max_steps {
            self.refill_turn(&mut out);
            let Some((t, due)) = self.next_due_filtered(false) else { break };
            self.clock = self.clock.max(t);
            self.process(due, &mut out);
        }
        let at = self.clock;
        self.close_all(at, &mut out);
        out
    }

    /// Ends the session at `now`: due work runs, then open episodes close.
    pub fn finish(&mut self, now: u64) -> Vec<SessionOutput> {
        let mut out = self.advance(now);
        let at = self.clock;
        self.close_all(at, &mut out);
        out
    }

    fn close_all(&mut self, at: u64, out: &mut Vec<SessionOutput>) {
        while let Some(ep) = self.episodes.first() {
            let id = ep.id;
            self.close_episode(id, at, out);
        }
    }

    fn emit(&mut self, out: &mut Vec<SessionOutput>, frame: ServerFrame) {
        self.seq += 1;
        out.push(SessionOutput::Frame(ServerEnvelope { seq: self.seq, t: self.clock, frame }));
    }

    fn diag(&mut self, out: &mut Vec<SessionOutput>, turn: TurnKind, trigger: Option<TriggerKind>, status: TurnStatus, detail: Option<String>) {
        self.emit(out, ServerFrame::TriggerDiagnostic { turn, trigger, status, detail });
    }

    fn presence_patch(&mut self, out: &mut Vec<SessionOutput>) {
        if self.presence.visible() {
            let presence = self.presence.snapshot();
            self.emit(out, ServerFrame::PresencePatch { presence });
        }
    }

    fn set_bubble(&mut self, bubble: Option<Bubble>, out: &mut Vec<SessionOutput>) {
        if self.presence.set_bubble(bubble).is_some() {
            self.presence_patch(out);
        }
    }

    fn next_due(&self) -> Option<(u64, Due)> {
        self.next_due_filtered(true)
    }

    fn next_due_filtered(&self, with_timers: bool) -> Option<(u64, Due)> {
        let mut best: Option<(u64, Due)> = None;
        let mut consider = |t: u64, d: Due| {
            if best.is_none_or(|(b, _)| t < b) {
                best = Some((t, d));
            }
        };
        for ep in &self.episodes {
            if let Some(done) = ep.output_done_ms {
                consider(done + self.engagement_window_ms, Due::Episode(ep.id));
            }
        }
        if let Some(t) = self.presence.next_expiry() {
            consider(t, Due::Highlight);
        }
        if let Some((t, _)) = self.turn.as_ref().and_then(|turn| turn.next.as_ref()) {
            consider(*t, Due::Turn);
        }
        match &self.choreography {
            Some(c) => consider(c.next_at, Due::Choreography),
            None if !self.edit_queue.is_empty() => consider(self.queue_ready_at, Due::Choreography),
            None => {}
        }
        if with_timers {
            if let Some(t) = self.engine.next_deadline() {
                consider(t, Due::Timer);
            }
        }
        best
    }

    fn run_until(&mut self, now: u64, out: &mut Vec<SessionOutput>) {
        loop {
            self.refill_turn(out);
            match self.next_due() {
                Some((t, due)) if t <= now => {
                    self.clock = self.clock.max(t);
                    self.process(due, out);
                }
                _ => break,
            }
        }
        self.clock = self.clock.max(now);
        self.refill_turn(out);
    }

    fn process(&mut self, due: Due, out: &mut Vec<SessionOutput>) {
        match due {
            Due::Episode(id) => {
                let at = self.clock;
                self.close_episode(id, at, out);
            }
            Due::Highlight => {
                if self.presence.expire_highlights(self.clock).is_some() {
                    self.presence_patch(out);
                }
            }
            Due::Turn => self.deliver_turn_item(out),
            Due::Choreography => self.step_choreography(out),
            Due::Timer => {
                let doc = self.doc.clone();
                let triggers = self.engine.tick(self.clock, &doc);
                self.on_triggers(triggers, out);
            }
        }
    }

    // ----- user input -------------------------------------------------

    /// Bookkeeping shared by every user action: interpretation time for
    /// episodes whose output is complete, and the activity clock.
    fn note_user_action(&mut self, action: UserAction) {
        let now = self.clock;
        for ep in &mut self.episodes {
            if let (Some(done), None) = (ep.output_done_ms, ep.interpretation_ms) {
                if now >= done {
                    ep.interpretation_ms = Some(now - done);
                }
            }
            if action != UserAction::Message {
                ep.observed.push(ObservedEvent { at_ms: now, kind: ObservedKind::Activity });
            }
        }
        self.last_activity_ms = now;
    }

    fn feed_engine(&mut self, ev: &EditorEvent, origin: Option<EditOrigin>, before: &Document, out: &mut Vec<SessionOutput>) {
        let after = self.doc.clone();
        if let Ok(triggers) = self.engine.on_event_with_origin(ev, origin, before, &after) {
            self.on_triggers(triggers, out);
        }
    }

    fn user_edit(&mut self, base_version: u64, range: Range, text: String, origin: Option<EditOrigin>, out: &mut Vec<SessionOutput>) {
        let current = self.doc.version();
        if base_version != current {
            self.emit(
                out,
                ServerFrame::Error {
                    code: ErrorCode::StaleVersion,
                    message: format!("edit based on version {base_version}, document is at version {current}"),
                    current_version: Some(current),
                },
            );
            return;
        }
        let edit = TextEdit::new(range, text, base_version, Author::User);
        let before = self.doc.clone();
        let after = match apply_edit(&before, &edit) {
            Ok(d) => d,
            Err(e) => {
                self.emit(out, ServerFrame::error(ErrorCode::InvalidRange, e.to_string()));
                return;
            }
        };
        self.note_user_action(UserAction::Edit);
        let now = self.clock;
        let mut reverted = Vec::new();
        for ep in &mut self.episodes {
            let is_revert = ep
                .agent_ranges
                .iter()
                .any(|r| !r.is_empty() && edit.range.start <= r.start && r.end <= edit.range.end);
            if is_revert {
                ep.observed.push(ObservedEvent { at_ms: now, kind: ObservedKind::RevertedAgentEdit });
                reverted.push(ep.id);
            }
        }
        self.commit_edit(&before, after, &edit);
        self.emit(out, ServerFrame::EditAccepted { version: self.doc.version() });
        self.presence.follow_edit(&edit);

        if let Some(running) = &mut self.choreography {
            if let Err(aborted) = running.runner.on_user_edit(&edit) {
                let episode = running.episode;
                let typed = running.runner.typed_range();
                self.choreography = None;
                self.queue_ready_at = self.clock;
                self.diag(out, TurnKind::Trigger, None, TurnStatus::ActionRejected, Some(aborted.to_string()));
                if let Some(r) = typed {
                    self.track_agent_range(episode, r);
                }
                self.presence.selection = None;
                if self.edit_queue.is_empty() {
                    self.presence.bubble = None;
                }
                self.presence_patch(out);
                self.release_pending(episode);
            }
        }

        let now = self.clock;
        for id in reverted {
            self.close_episode(id, now, out);
        }

        let ev = EditorEvent::new(now, EventPayload::Edit { edit });
        self.feed_engine(&ev, origin, &before, out);
    }

    /// Installs a new document version and keeps everything that points
    /// into the document aligned with it.
    fn commit_edit(&mut self, before: &Document, after: Document, edit: &TextEdit) {
        self.edit_log.push(edit.clone());
        self.doc = after;
        self.store.remap_anchors(&diff_line_shift(edit, before.line_count()));
        for ep in &mut self.episodes {
            ep.agent_ranges = ep.agent_ranges.iter().filter_map(|r| transform_range(*r, edit)).collect();
        }
    }

    fn user_message(&mut self, text: String, scope: ChatScope, compose_start_ms: Option<u64>, out: &mut Vec<SessionOutput>) {
        if let ChatScope::Breakout { id } = scope {
            if self.store.breakout(id).is_none() {
                self.emit(out, ServerFrame::error(ErrorCode::UnknownBreakout, format!("no breakout {id}")));
                return;
            }
        }
        let now = self.clock;
        let expression_ms = match compose_start_ms {
            Some(start) => now.saturating_sub(start),
            None => now - self.last_activity_ms,
        };
        self.note_user_action(UserAction::Message);
        let id = match self.store.post(Author::User, text.clone(), scope.clone(), now) {
            Ok(id) => id,
            Err(e) => {
                self.emit(out, ServerFrame::error(ErrorCode::UnknownBreakout, e.to_string()));
                return;
            }
        };
        self.emit(out, ServerFrame::UserMessagePosted { id, scope: scope.clone(), text: text.clone() });

        for cancelled in self.policy.on_user_action(UserAction::Message) {
            if self.turn.as_ref().is_some_and(|t| t.task.id == cancelled.id) {
                let turn = self.turn.take().expect("checked");
                self.diag(out, turn.purpose.kind(), turn.purpose.trigger(), TurnStatus::Cancelled, Some("user sent a message".into()));
                self.release_pending(turn.episode);
            }
        }
        for ep in &mut self.episodes {
            ep.observed.push(ObservedEvent { at_ms: now, kind: ObservedKind::UserMessage { scope: scope.clone() } });
        }
        self.close_all(now, out);

        let episode = self.next_episode;
        self.next_episode += 1;
        self.episodes.push(OpenEpisode {
            id: episode,
            initiator: Author::User,
            start_ms: now,
            expression_ms,
            trigger: None,
            scope: scope.clone(),
            pending: 0,
            last_output_ms: None,
            output_done_ms: None,
            interpretation_ms: None,
            agent_ranges: Vec::new(),
            has_agent_edits: false,
            observed: Vec::new(),
        });
        self.start_turn(Purpose::Reply { message_id: id, text }, scope, Some(episode), out);
    }

    fn execute(&mut self, out: &mut Vec<SessionOutput>) {
        self.note_user_action(UserAction::Execute);
        if self.exec_running {
            self.emit(out, ServerFrame::error(ErrorCode::ExecutionBusy, "a program run is already in progress"));
            return;
        }
        self.exec_running = true;
        self.exec_request = Some(ExecutionRequest {
            source: self.doc.text().to_owned(),
            version: self.doc.version(),
            requested_at_ms: self.clock,
        });
        self.set_bubble(Some(Bubble::executing()), out);
    }

    // ----- triggers and turns -----------------------------------------

    fn on_triggers(&mut self, triggers: Vec<Trigger>, out: &mut Vec<SessionOutput>) {
        if triggers.is_empty() {
            return;
        }
        let mut admitted = Vec::new();
        for t in triggers {
            if admit(&self.profile, &t) {
                admitted.push(t);
            } else {
                self.diag(out, TurnKind::Trigger, Some(t.kind), TurnStatus::NotAdmitted, None);
            }
        }
        let arbitration = self.policy.arbitrate(admitted);
        for t in &arbitration.dropped {
            let detail = if self.policy.in_flight().is_some() { "agent busy" } else { "lower priority" };
            self.diag(out, TurnKind::Trigger, Some(t.kind), TurnStatus::Dropped, Some(detail.into()));
        }
        if let Some(t) = arbitration.start {
            self.diag(out, TurnKind::Trigger, Some(t.kind), TurnStatus::Started, None);
            self.start_turn(Purpose::Trigger(Box::new(t)), ChatScope::Global, None, out);
        }
    }

    fn memory(&self, scope: &ChatScope, exclude: Option<u64>) -> Vec<MemoryEntry> {
        self.store
            .scope_messages(scope)
            .into_iter()
            .filter(|m| Some(m.id) != exclude)
            .map(|m| MemoryEntry {
                id: m.id,
                author: m.author,
                text: m.text.clone(),
                timestamp_ms: m.timestamp_ms,
            })
            .collect()
    }

    fn build_bundle(&self, purpose: &Purpose, scope: &ChatScope) -> PromptBundle {
        let mut input = PromptInput::new(&self.doc, self.engine.caret());
        input.selection = self.engine.selection();
        input.memory_window = self.memory_window;
        let message_type = match purpose {
            Purpose::Trigger(t) => {
                input.memory = self.memory(&ChatScope::Global, None);
                let ctx = &t.context;
                input.focus_text = match t.kind {
                    TriggerKind::BlockCompleted => ctx.completed_block.as_ref().map(|b| {
                        (b.header_line..=b.end_line).filter_map(|l| self.doc.line(l)).collect::<Vec<_>>().join("\n")
                    }),
                    TriggerKind::CommentNewline => ctx.comment_line.and_then(|l| self.doc.line(l)).map(str::to_owned),
                    TriggerKind::MultiLineChange => ctx.edited_range.and_then(|r| self.doc.slice(r)).map(str::to_owned),
                    _ => None,
                };
                if t.kind == TriggerKind::Executed {
                    input.executed = true;
                    input.console_tail = ctx.console_tail.clone();
                }
                MessageType::for_trigger(t.kind)
            }
            Purpose::Reply { message_id, text } => {
                input.memory = self.memory(scope, Some(*message_id));
                input.user_message = Some(text.clone());
                match scope {
                    ChatScope::Global => MessageType::Query,
                    ChatScope::Breakout { id } => {
                        input.anchor_line = self.store.breakout(*id).map(|b| b.anchor_line);
                        MessageType::BreakoutQuery
                    }
                }
            }
            Purpose::Grouping => {
                input.memory = self.memory(&ChatScope::Global, None);
                let listing: Vec<String> = self
                    .store
                    .ungrouped_global()
                    .map(|m| format!("[{}] {}: {}", m.id, if m.author == Author::User { "user" } else { "assistant" }, m.text))
                    .collect();
                input.focus_text = Some(listing.join("\n"));
                MessageType::Breakout
            }
        };
        build_prompt(message_type, &input, &self.profile)
    }

    fn turn_permissions(&self, purpose: &Purpose) -> (bool, bool) {
        match purpose {
            Purpose::Grouping => (false, self.profile.breakouts_enabled),
            _ => (self.profile.agent_can_edit_document, false),
        }
    }

    fn start_turn(&mut self, purpose: Purpose, scope: ChatScope, episode: Option<u64>, out: &mut Vec<SessionOutput>) {
        let source = match &purpose {
            Purpose::Trigger(t) => TaskSource::Trigger { trigger: t.kind },
            Purpose::Reply { .. } => TaskSource::UserMessage,
            Purpose::Grouping => TaskSource::Grouping,
        };
        let task = self.policy.begin(source, self.clock);
        let bundle = self.build_bundle(&purpose, &scope);
        let (can_edit, can_group) = self.turn_permissions(&purpose);
        let tools = tool_specs(can_edit, can_group);
        match self.backend.generate(&bundle, &tools, &task.cancel) {
            Err(e) => {
                self.policy.finish(task.id);
                self.diag(out, purpose.kind(), purpose.trigger(), TurnStatus::Failed, Some(e.to_string()));
                self.emit(out, ServerFrame::error(ErrorCode::Backend, e.to_string()));
                if let Some(id) = episode {
                    self.settle_if_idle(id);
                }
            }
            Ok(stream) => {
                if let Some(ep) = episode.and_then(|id| self.episode_mut(id)) {
                    ep.pending += 1;
                }
                let bubble = if matches!(purpose, Purpose::Grouping) { Bubble::loading() } else { Bubble::thinking() };
                let focus = match &purpose {
                    Purpose::Trigger(t) => Some(t.focus_line()),
                    Purpose::Reply { .. } => match &scope {
                        ChatScope::Breakout { id } => self.store.breakout(*id).map(|b| b.anchor_line),
                        ChatScope::Global => Some(self.engine.caret().line),
                    },
                    Purpose::Grouping => None,
                };
                let mut changed = self.presence.set_bubble(Some(bubble)).is_some();
                if let Some(line) = focus {
                    changed |= self.presence.attend(line).is_some();
                }
                if changed {
                    self.presence_patch(out);
                }
                self.turn = Some(ActiveTurn {
                    task,
                    purpose,
                    scope,
                    base_doc: self.doc.clone(),
                    stream,
                    next: None,
                    last_ms: self.clock,
                    events: Vec::new(),
                    episode,
                });
            }
        }
    }

    /// Pulls the next stream item of the active turn, if one is available
    /// and none is already waiting.
    fn refill_turn(&mut self, out: &mut Vec<SessionOutput>) {
        let clock = self.clock;
        let Some(turn) = self.turn.as_mut() else { return };
        if turn.next.is_some() {
            return;
        }
        match turn.stream.poll() {
            Polled::Item(Ok(item)) => {
                let due = (turn.last_ms + item.delay_ms).max(clock);
                turn.next = Some((due, item));
            }
            Polled::Item(Err(e)) => {
                let turn = self.turn.take().expect("checked");
                self.policy.finish(turn.task.id);
                self.diag(out, turn.purpose.kind(), turn.purpose.trigger(), TurnStatus::Failed, Some(e.to_string()));
                self.emit(out, ServerFrame::error(ErrorCode::Backend, e.to_string()));
                self.set_bubble(None, out);
                self.release_pending(turn.episode);
            }
            Polled::Pending => {}
            Polled::Finished => self.finalize_turn(out),
        }
    }

    fn deliver_turn_item(&mut self, out: &mut Vec<SessionOutput>) {
        let Some(turn) = self.turn.as_mut() else { return };
        let Some((due, item)) = turn.next.take() else { return };
        turn.last_ms = due;
        let done = item.event == StreamEvent::Done;
        turn.events.push(item.event);
        if done {
            self.finalize_turn(out);
        }
    }

    fn finalize_turn(&mut self, out: &mut Vec<SessionOutput>) {
        let Some(turn) = self.turn.take() else { return };
        self.policy.finish(turn.task.id);
        let (can_edit, can_group) = self.turn_permissions(&turn.purpose);
        let output = {
            let env = TurnEnv {
                doc: &turn.base_doc,
                store: &self.store,
                can_edit,
                can_group,
                scope: &turn.scope,
            };
            interpret_stream(&turn.events, &env)
        };
        let kind = turn.purpose.kind();
        let trigger = turn.purpose.trigger();
        for d in output.diagnostics {
            self.diag(out, kind, trigger, TurnStatus::ActionRejected, Some(d));
        }
        let actions: Vec<AgentAction> = output
            .actions
            .into_iter()
            .filter(|a| !matches!((kind, a), (TurnKind::Grouping, AgentAction::SendMessage { .. })))
            .filter(|a| !matches!(a, AgentAction::NoResponse))
            .collect();
        if actions.is_empty() {
            self.diag(out, kind, trigger, TurnStatus::NoResponse, None);
            if self.edit_queue.is_empty() && self.choreography.is_none() {
                self.set_bubble(None, out);
            }
            self.release_pending(turn.episode);
            return;
        }

        let episode = match turn.episode {
            Some(id) => Some(id),
            None => {
                let id = self.next_episode;
                self.next_episode += 1;
                self.episodes.push(OpenEpisode {
                    id,
                    initiator: Author::Agent,
                    start_ms: self.clock,
                    expression_ms: 0,
                    trigger,
                    scope: turn.scope.clone(),
                    pending: 0,
                    last_output_ms: None,
                    output_done_ms: None,
                    interpretation_ms: None,
                    agent_ranges: Vec::new(),
                    has_agent_edits: false,
                    observed: Vec::new(),
                });
                Some(id)
            }
        };

        let mut queued_edits = false;
        for action in actions {
            match action {
                AgentAction::SendMessage { text, scope } => match self.store.post(Author::Agent, text.clone(), scope.clone(), self.clock) {
                    Ok(id) => {
                        self.emit(out, ServerFrame::AgentMessage { id, scope, text });
                        self.mark_output(episode);
                    }
                    Err(e) => self.diag(out, kind, trigger, TurnStatus::ActionRejected, Some(e.to_string())),
                },
                AgentAction::EditCode { tool, .. } => match atomic_edit(&tool, &turn.base_doc) {
                    Ok(edit) => {
                        if self.edit_queue.is_empty() && self.choreography.is_none() {
                            self.queue_ready_at = self.clock;
                        }
                        self.edit_queue.push_back(QueuedEdit { source: tool, edit, episode });
                        if let Some(ep) = episode.and_then(|id| self.episode_mut(id)) {
                            ep.pending += 1;
                        }
                        queued_edits = true;
                    }
                    Err(e) => self.diag(out, kind, trigger, TurnStatus::ActionRejected, Some(e.to_string())),
                },
                AgentAction::GroupMessages { from_id, to_id, summary, anchor_line } => {
                    let line_count = self.doc.line_count();
                    match self.store.group_messages(from_id, to_id, &summary, anchor_line, line_count) {
                        Ok(b) => {
                            let breakout = b.clone();
                            self.emit(out, ServerFrame::MessagesGrouped { breakout });
                            self.mark_output(episode);
                        }
                        Err(e) => self.diag(out, kind, trigger, TurnStatus::ActionRejected, Some(e.to_string())),
                    }
                }
                AgentAction::NoResponse => {}
            }
        }
        self.diag(out, kind, trigger, TurnStatus::Delivered, None);

        let wants_grouping = queued_edits
            && kind != TurnKind::Grouping
            && turn.scope == ChatScope::Global
            && self.profile.breakouts_enabled
            && self.store.ungrouped_global().next().is_some();
        if wants_grouping {
            self.start_turn(Purpose::Grouping, ChatScope::Global, episode, out);
        } else if !queued_edits && self.edit_queue.is_empty() && self.choreography.is_none() {
            self.set_bubble(None, out);
        }
        if turn.episode.is_some() {
            self.release_pending(turn.episode);
        } else if let Some(id) = episode {
            self.settle_if_idle(id);
        }
    }

    // ----- agent edits ------------------------------------------------

    /// Rebases an agent edit made against an older version onto the current
    /// document. Fails when a user edit since then overlaps it.
    fn rebase(&self, edit: &TextEdit) -> Result<TextEdit, String> {
        let mut range = edit.range;
        for logged in self.edit_log.iter().skip(edit.base_version as usize) {
            if logged.author == Author::User && interiors_overlap(range, logged.range) {
                return Err(format!("agent edit at {} overlaps user edit at {}", edit.range, logged.range));
            }
            range = transform_range(range, logged).ok_or_else(|| format!("agent edit at {} was overwritten", edit.range))?;
        }
        Ok(TextEdit {
            range,
            new_text: edit.new_text.clone(),
            base_version: self.doc.version(),
            author: Author::Agent,
        })
    }

    fn apply_agent_edit(&mut self, edit: TextEdit, episode: Option<u64>, out: &mut Vec<SessionOutput>) -> bool {
        let before = self.doc.clone();
        let after = match apply_edit(&before, &edit) {
            Ok(d) => d,
            Err(e) => {
                self.diag(out, TurnKind::Trigger, None, TurnStatus::ActionRejected, Some(e.to_string()));
                return false;
            }
        };
        self.commit_edit(&before, after, &edit);
        self.presence.shift_highlights(&edit);
        let ev = EditorEvent::new(self.clock, EventPayload::Edit { edit: edit.clone() });
        let _ = self.engine.on_event(&ev, &before, &self.doc.clone());
        let new_version = self.doc.version();
        self.emit(out, ServerFrame::AgentEditApplied { edit, new_version });
        if let Some(ep) = episode.and_then(|id| self.episode_mut(id)) {
            ep.has_agent_edits = true;
        }
        self.mark_output(episode);
        true
    }

    fn step_choreography(&mut self, out: &mut Vec<SessionOutput>) {
        if self.choreography.is_none() {
            let Some(queued) = self.edit_queue.pop_front() else { return };
            let edit = match self.rebase(&queued.edit) {
                Ok(e) => e,
                Err(msg) => {
                    self.diag(out, TurnKind::Trigger, None, TurnStatus::ActionRejected, Some(msg));
                    self.release_pending(queued.episode);
                    self.queue_ready_at = self.clock;
                    return;
                }
            };
            if !self.presence.visible() {
                let inserted = edit.inserted_range();
                if self.apply_agent_edit(edit, queued.episode, out) {
                    self.track_agent_range(queued.episode, inserted);
                }
                self.release_pending(queued.episode);
                self.queue_ready_at = self.clock;
                return;
            }
            let choreo = EditChoreography {
                steps: plan_steps(&queued.source, &edit, self.chars_per_tick),
                source: queued.source,
                atomic: edit,
            };
            self.choreography = Some(RunningChoreography {
                runner: ChoreographyRunner::new(&choreo),
                next_at: self.clock,
                episode: queued.episode,
            });
            self.set_bubble(Some(Bubble::writing()), out);
            return;
        }

        let doc = self.doc.clone();
        let running = self.choreography.as_mut().expect("checked");
        let step = running.runner.step(&doc, &mut self.presence);
        let episode = running.episode;
        running.next_at = self.clock + self.tick_ms;
        if let Some(edit) = step.edit {
            self.apply_agent_edit(edit, episode, out);
        }
        if step.patch.is_some() {
            self.presence_patch(out);
        }
        if step.done {
            let running = self.choreography.take().expect("checked");
            if let Some(r) = running.runner.typed_range() {
                self.track_agent_range(episode, r);
                self.presence.add_highlight(r, self.clock);
            }
            self.presence.selection = None;
            if self.edit_queue.is_empty() {
                self.presence.bubble = None;
            }
            self.presence_patch(out);
            self.queue_ready_at = self.clock;
            self.release_pending(episode);
        }
    }

    // ----- episodes ---------------------------------------------------

    fn episode_mut(&mut self, id: u64) -> Option<&mut OpenEpisode> {
        self.episodes.iter_mut().find(|e| e.id == id)
    }

    fn track_agent_range(&mut self, episode: Option<u64>, range: Range) {
        if let Some(ep) = episode.and_then(|id| self.episode_mut(id)) {
            if !range.is_empty() {
                ep.agent_ranges.push(range);
            }
        }
    }

    fn mark_output(&mut self, episode: Option<u64>) {
        let now = self.clock;
        if let Some(ep) = episode.and_then(|id| self.episode_mut(id)) {
            ep.last_output_ms = Some(now);
        }
        self.last_activity_ms = now;
    }

    fn release_pending(&mut self, episode: Option<u64>) {
        let Some(id) = episode else { return };
        if let Some(ep) = self.episode_mut(id) {
            ep.pending = ep.pending.saturating_sub(1);
        }
        self.settle_if_idle(id);
    }

    /// Marks the episode's output as complete once nothing is pending.
    fn settle_if_idle(&mut self, id: u64) {
        let now = self.clock;
        if let Some(ep) = self.episode_mut(id) {
            if ep.pending == 0 && ep.output_done_ms.is_none() {
                ep.output_done_ms = Some(ep.last_output_ms.unwrap_or(now));
            }
        }
    }

    fn close_episode(&mut self, id: u64, at: u64, out: &mut Vec<SessionOutput>) {
        let Some(idx) = self.episodes.iter().position(|e| e.id == id) else { return };
        let ep = self.episodes.remove(idx);
        let output_done = ep.output_done_ms.or(ep.last_output_ms).unwrap_or(ep.start_ms);
        let view = EpisodeView {
            scope: ep.scope.clone(),
            output_done_ms: output_done,
            has_agent_edits: ep.has_agent_edits,
            closed_at_ms: at,
        };
        let outcome = classify_outcome(&view, &ep.observed, self.engagement_window_ms);
        if let Some(kind) = ep.trigger {
            let verdict = match outcome.classification {
                crate::policy::EpisodeClass::Engaged => TimerOutcome::Engaged,
                _ => TimerOutcome::Ignored,
            };
            self.engine.record_outcome(kind, verdict, at);
        }
        out.push(SessionOutput::Episode(EpisodeRecord {
            episode_id: ep.id,
            initiator: ep.initiator,
            start_ms: ep.start_ms,
            end_ms: at.max(ep.start_ms),
            expression_ms: ep.expression_ms,
            interpretation_ms: ep.interpretation_ms,
            trigger_kind: ep.trigger,
            scope: ep.scope,
            outcome,
            programming_stage_tag: None,
        }));
    }
}

/// Whether two ranges share interior text, or an insertion point falls
/// strictly inside the other range.
fn interiors_overlap(a: Range, b: Range) -> bool {
    let strictly_inside = |p: Position, r: Range| r.start < p && p < r.end;
    match (a.is_empty(), b.is_empty()) {
        (true, true) => false,
        (true, false) => strictly_inside(a.start, b),
        (false, true) => strictly_inside(b.start, a),
        (false, false) => a.start < b.end && b.start < a.end,
    }
}
