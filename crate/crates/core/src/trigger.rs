//! Turns the editor event stream into proactivity triggers.
//!
//! The engine is a pure state machine: it never reads a wall clock. Callers
//! feed events in timestamp order through [`TriggerEngine::on_event`] and
//! drive the two activity timers (idle and held selection) through
//! [`TriggerEngine::tick`], typically at the instant returned by
//! [`TriggerEngine::next_deadline`]. Timer triggers carry their exact deadline
//! as `fired_at_ms`, so simulated sessions reproduce thresholds to the
//! millisecond.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{transform_position, Author, Document, EditorEvent, EventPayload, Position, Range, TextEdit};
use crate::scope::{closed_blocks, detect_comment_newline, is_multi_line_change, AnalyzerConfig, CompletedBlock, LineClass};

pub const IDLE_BASE_MS: u64 = 30_000;
pub const IDLE_INCREMENT_MS: u64 = 30_000;
pub const SELECTION_BASE_MS: u64 = 15_000;
pub const SELECTION_INCREMENT_MS: u64 = 15_000;
pub const CONSOLE_TAIL_CHARS: usize = 4_000;
pub const CONTEXT_WINDOW_LINES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TriggerKind {
    Idle,
    BlockCompleted,
    Executed,
    MultiLineChange,
    CommentNewline,
    SelectionHold,
}

impl TriggerKind {
    pub const ALL: [TriggerKind; 6] = [
        TriggerKind::Idle,
        TriggerKind::BlockCompleted,
        TriggerKind::Executed,
        TriggerKind::MultiLineChange,
        TriggerKind::CommentNewline,
        TriggerKind::SelectionHold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TriggerKind::Idle => "Idle",
            TriggerKind::BlockCompleted => "BlockCompleted",
            TriggerKind::Executed => "Executed",
            TriggerKind::MultiLineChange => "MultiLineChange",
            TriggerKind::CommentNewline => "CommentNewline",
            TriggerKind::SelectionHold => "SelectionHold",
        }
    }
}

impl std::fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextWindow {
    pub first_line: usize,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriggerContext {
    pub caret: Position,
    pub selection: Option<Range>,
    pub window: ContextWindow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub console_tail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub execution_failed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completed_block: Option<CompletedBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub enclosing_blocks: Vec<CompletedBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comment_line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edited_range: Option<Range>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trigger {
    pub kind: TriggerKind,
    pub fired_at_ms: u64,
    pub context: TriggerContext,
}

impl Trigger {
    /// The document line this trigger is about, used to aim the agent's
    /// attention cursor.
    pub fn focus_line(&self) -> usize {
        let c = &self.context;
        match self.kind {
            TriggerKind::BlockCompleted => c.completed_block.as_ref().map_or(c.caret.line, |b| b.header_line),
            TriggerKind::CommentNewline => c.comment_line.unwrap_or(c.caret.line),
            TriggerKind::MultiLineChange => c.edited_range.map_or(c.caret.line, |r| r.start.line),
            TriggerKind::SelectionHold => c.selection.map_or(c.caret.line, |r| r.start.line),
            TriggerKind::Idle | TriggerKind::Executed => c.caret.line,
        }
    }

    /// Checks that the payload matches the kind.
    pub fn is_well_formed(&self) -> bool {
        let c = &self.context;
        match self.kind {
            TriggerKind::BlockCompleted => c.completed_block.is_some(),
            TriggerKind::CommentNewline => c.comment_line.is_some(),
            TriggerKind::Executed => c.console_tail.is_some(),
            TriggerKind::MultiLineChange => c.edited_range.is_some(),
            TriggerKind::SelectionHold => c.selection.is_some_and(|r| !r.is_empty()),
            TriggerKind::Idle => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdaptiveTimer {
    pub base_ms: u64,
    pub increment_ms: u64,
    pub ignore_count: u32,
    pub armed_at_ms: Option<u64>,
}

impl AdaptiveTimer {
    pub const fn new(base_ms: u64, increment_ms: u64) -> Self {
        Self {
            base_ms,
            increment_ms,
            ignore_count: 0,
            armed_at_ms: None,
        }
    }

    pub fn current_threshold_ms(&self) -> u64 {
        self.base_ms + u64::from(self.ignore_count) * self.increment_ms
    }

    pub fn deadline(&self) -> Option<u64> {
        self.armed_at_ms.map(|t| t + self.current_threshold_ms())
    }

    pub fn arm(&mut self, now_ms: u64) {
        self.armed_at_ms = Some(now_ms);
    }

    pub fn disarm(&mut self) {
        self.armed_at_ms = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimerOutcome {
    Engaged,
    Ignored,
}

/// How an edit reached the editor. Pastes can raise multi-line triggers;
/// typed edits feed outdent and comment detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOrigin {
    Typed,
    Paste,
}

impl EditOrigin {
    /// Best guess when the client did not say: one character, or a newline
    /// followed only by indentation, is a keystroke.
    pub fn infer(new_text: &str) -> Self {
        let typed_newline = new_text.starts_with('\n') && new_text[1..].chars().all(|c| c == ' ' || c == '\t');
        if new_text.chars().count() <= 1 || typed_newline {
            EditOrigin::Typed
        } else {
            EditOrigin::Paste
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TriggerConfig {
    pub idle_base_ms: u64,
    pub idle_increment_ms: u64,
    pub selection_base_ms: u64,
    pub selection_increment_ms: u64,
    pub tab_width: usize,
    pub trivial_lines: Vec<String>,
    /// Quiet period added per ignored BlockCompleted intervention. Zero keeps
    /// block completion non-adaptive.
    pub completed_cooldown_ms_per_ignore: u64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            idle_base_ms: IDLE_BASE_MS,
            idle_increment_ms: IDLE_INCREMENT_MS,
            selection_base_ms: SELECTION_BASE_MS,
            selection_increment_ms: SELECTION_INCREMENT_MS,
            tab_width: crate::scope::DEFAULT_TAB_WIDTH,
            trivial_lines: vec!["pass".to_owned()],
            completed_cooldown_ms_per_ignore: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("event at {event_ms}ms arrived after {last_ms}ms")]
pub struct OutOfOrderEvent {
    pub event_ms: u64,
    pub last_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TriggerEngine {
    config: TriggerConfig,
    analyzer: AnalyzerConfig,
    idle: AdaptiveTimer,
    selection_timer: AdaptiveTimer,
    caret: Position,
    selection: Option<Range>,
    last_seen_ms: u64,
    fired: BTreeSet<TriggerKind>,
    completed_ignores: u32,
    completed_quiet_until: u64,
}

impl Default for TriggerEngine {
    fn default() -> Self {
        Self::new(TriggerConfig::default())
    }
}

impl TriggerEngine {
    pub fn new(config: TriggerConfig) -> Self {
        let analyzer = AnalyzerConfig {
            tab_width: config.tab_width,
            trivial_lines: config.trivial_lines.clone(),
        };
        Self {
            idle: AdaptiveTimer::new(config.idle_base_ms, config.idle_increment_ms),
            selection_timer: AdaptiveTimer::new(config.selection_base_ms, config.selection_increment_ms),
            config,
            analyzer,
            caret: Position::new(0, 0),
            selection: None,
            last_seen_ms: 0,
            fired: BTreeSet::new(),
            completed_ignores: 0,
            completed_quiet_until: 0,
        }
    }

    pub fn config(&self) -> &TriggerConfig {
        &self.config
    }

    pub fn idle_timer(&self) -> &AdaptiveTimer {
        &self.idle
    }

    pub fn selection_timer(&self) -> &AdaptiveTimer {
        &self.selection_timer
    }

    pub fn caret(&self) -> Position {
        self.caret
    }

    pub fn selection(&self) -> Option<Range> {
        self.selection
    }

    pub fn last_seen_ms(&self) -> u64 {
        self.last_seen_ms
    }

    /// Starts the idle clock at session open.
    pub fn start(&mut self, now_ms: u64) {
        self.last_seen_ms = now_ms;
        self.idle.arm(now_ms);
    }

    /// Earliest pending timer deadline.
    pub fn next_deadline(&self) -> Option<u64> {
        match (self.idle.deadline(), self.selection_timer.deadline()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn on_event(&mut self, event: &EditorEvent, before: &Document, after: &Document) -> Result<Vec<Trigger>, OutOfOrderEvent> {
        self.on_event_with_origin(event, None, before, after)
    }

    /// Processes one editor event. `origin` classifies user edits; when absent
    /// it is inferred from the inserted text.
    pub fn on_event_with_origin(
        &mut self,
        event: &EditorEvent,
        origin: Option<EditOrigin>,
        before: &Document,
        after: &Document,
    ) -> Result<Vec<Trigger>, OutOfOrderEvent> {
        let now = event.timestamp_ms;
        if now < self.last_seen_ms {
            return Err(OutOfOrderEvent {
                event_ms: now,
                last_ms: self.last_seen_ms,
            });
        }
        self.last_seen_ms = now;
        let mut out = Vec::new();
        match &event.payload {
            EventPayload::Edit { edit } if edit.author == Author::Agent => {
                self.follow_agent_edit(edit);
            }
            EventPayload::Edit { edit } => {
                self.idle.arm(now);
                self.selection = None;
                self.selection_timer.disarm();
                self.caret = edit.inserted_end();
                let origin = origin.unwrap_or_else(|| EditOrigin::infer(&edit.new_text));
                let curr = self.analyzer.analyze(after.text());
                if origin == EditOrigin::Paste && is_multi_line_change(edit) {
                    let mut ctx = self.context(after);
                    ctx.edited_range = Some(edit.inserted_range());
                    out.push(self.emit(TriggerKind::MultiLineChange, now, ctx));
                }
                if origin == EditOrigin::Typed {
                    if let Some(line) = detect_comment_newline(before, edit, &curr) {
                        let mut ctx = self.context(after);
                        ctx.comment_line = Some(line);
                        out.push(self.emit(TriggerKind::CommentNewline, now, ctx));
                    }
                    let prev = self.analyzer.analyze(before.text());
                    let mut blocks = closed_blocks(&prev, &curr, self.caret);
                    if !blocks.is_empty() && now >= self.completed_quiet_until {
                        let innermost = blocks.remove(0);
                        let mut ctx = self.context(after);
                        ctx.completed_block = Some(innermost);
                        ctx.enclosing_blocks = blocks;
                        out.push(self.emit(TriggerKind::BlockCompleted, now, ctx));
                    }
                }
            }
            EventPayload::CaretMove { position } => {
                self.idle.arm(now);
                self.caret = *position;
            }
            EventPayload::SelectionChange { range } => {
                self.idle.arm(now);
                self.caret = range.end;
                if range.is_empty() {
                    self.selection = None;
                    self.selection_timer.disarm();
                } else if self.selection != Some(*range) || self.selection_timer.armed_at_ms.is_none() {
                    self.selection = Some(*range);
                    self.selection_timer.arm(now);
                }
            }
            EventPayload::Execute { console, failed } => {
                let mut ctx = self.context(after);
                ctx.console_tail = Some(console_tail(console));
                ctx.execution_failed = Some(*failed);
                out.push(self.emit(TriggerKind::Executed, now, ctx));
            }
            EventPayload::UserMessage { .. } | EventPayload::BreakoutOpen { .. } => {}
        }
        Ok(out)
    }

    /// Fires every timer whose deadline is at or before `now_ms`.
    pub fn tick(&mut self, now_ms: u64, doc: &Document) -> Vec<Trigger> {
        let mut out = Vec::new();
        let mut due: Vec<(u64, TriggerKind)> = Vec::new();
        if let Some(d) = self.idle.deadline().filter(|d| *d <= now_ms) {
            due.push((d, TriggerKind::Idle));
        }
        if let Some(d) = self.selection_timer.deadline().filter(|d| *d <= now_ms) {
            due.push((d, TriggerKind::SelectionHold));
        }
        due.sort();
        for (deadline, kind) in due {
            match kind {
                TriggerKind::Idle => {
                    self.idle.disarm();
                    if self.caret_on_empty_or_trivial(doc) {
                        continue;
                    }
                    let ctx = self.context(doc);
                    out.push(self.emit(kind, deadline, ctx));
                }
                _ => {
                    self.selection_timer.disarm();
                    if self.selection.is_some() {
                        let ctx = self.context(doc);
                        out.push(self.emit(kind, deadline, ctx));
                    }
                }
            }
        }
        self.last_seen_ms = self.last_seen_ms.max(now_ms);
        out
    }

    /// Applies the engagement verdict for a delivered intervention.
    pub fn record_outcome(&mut self, kind: TriggerKind, outcome: TimerOutcome, now_ms: u64) {
        if !self.fired.contains(&kind) {
            return;
        }
        let counter = match kind {
            TriggerKind::Idle => &mut self.idle.ignore_count,
            TriggerKind::SelectionHold => &mut self.selection_timer.ignore_count,
            TriggerKind::BlockCompleted => {
                match outcome {
                    TimerOutcome::Engaged => self.completed_ignores = 0,
                    TimerOutcome::Ignored => self.completed_ignores += 1,
                }
                self.completed_quiet_until =
                    now_ms + u64::from(self.completed_ignores) * self.config.completed_cooldown_ms_per_ignore;
                return;
            }
            _ => return,
        };
        match outcome {
            TimerOutcome::Engaged => *counter = 0,
            TimerOutcome::Ignored => *counter += 1,
        }
    }

    /// Keeps the tracked caret and selection aligned with agent edits without
    /// counting them as user activity.
    pub fn follow_agent_edit(&mut self, edit: &TextEdit) {
        self.caret = transform_position(self.caret, edit).unwrap_or(edit.range.start);
        if let Some(sel) = self.selection {
            self.selection = crate::document::transform_range(sel, edit);
            if self.selection.is_none() {
                self.selection_timer.disarm();
            }
        }
    }

    fn caret_on_empty_or_trivial(&self, doc: &Document) -> bool {
        let Some(text) = doc.line(self.caret.line) else {
            return true;
        };
        let lines = self.analyzer.analyze(text);
        match lines.first() {
            None => true,
            Some(l) => matches!(l.class, LineClass::Blank | LineClass::Trivial),
        }
    }

    fn emit(&mut self, kind: TriggerKind, at: u64, context: TriggerContext) -> Trigger {
        self.fired.insert(kind);
        Trigger {
            kind,
            fired_at_ms: at,
            context,
        }
    }

    fn context(&self, doc: &Document) -> TriggerContext {
        TriggerContext {
            caret: self.caret,
            selection: self.selection,
            window: context_window(doc, self.caret.line),
            console_tail: None,
            execution_failed: None,
            completed_block: None,
            enclosing_blocks: Vec::new(),
            comment_line: None,
            edited_range: None,
        }
    }
}

/// Lines within ±20 of `line`.
pub fn context_window(doc: &Document, line: usize) -> ContextWindow {
    let first = line.saturating_sub(CONTEXT_WINDOW_LINES);
    let lines: Vec<String> = doc
        .lines()
        .skip(first)
        .take(line + CONTEXT_WINDOW_LINES + 1 - first)
        .map(str::to_owned)
        .collect();
    ContextWindow { first_line: first, lines }
}

/// Last 4000 characters of console output.
pub fn console_tail(console: &str) -> String {
    let count = console.chars().count();
    if count <= CONSOLE_TAIL_CHARS {
        console.to_owned()
    } else {
        console.chars().skip(count - CONSOLE_TAIL_CHARS).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::apply_edit;

    struct Harness {
        engine: TriggerEngine,
        doc: Document,
    }

    impl Harness {
        fn new(text: &str) -> Self {
            let mut engine = TriggerEngine::default();
            engine.start(0);
            Self {
                engine,
                doc: Document::new("t", text),
            }
        }

        fn send(&mut self, t: u64, payload: EventPayload) -> Vec<Trigger> {
            let before = self.doc.clone();
            if let EventPayload::Edit { edit } = &payload {
                self.doc = apply_edit(&self.doc, edit).unwrap();
            }
            let ev = EditorEvent::new(t, payload);
            let after = self.doc.clone();
            self.engine.on_event(&ev, &before, &after).unwrap()
        }

        fn edit(&mut self, t: u64, at: Position, text: &str) -> Vec<Trigger> {
            let e = TextEdit::insert(at, text, self.doc.version(), Author::User);
            self.send(t, EventPayload::Edit { edit: e })
        }

        fn caret(&mut self, t: u64, line: usize, column: usize) -> Vec<Trigger> {
            self.send(t, EventPayload::CaretMove { position: Position::new(line, column) })
        }

        fn tick(&mut self, t: u64) -> Vec<Trigger> {
            let doc = self.doc.clone();
            self.engine.tick(t, &doc)
        }
    }

    fn kinds(ts: &[Trigger]) -> Vec<TriggerKind> {
        ts.iter().map(|t| t.kind).collect()
    }

    #[test]
    fn threshold_formula_defaults() {
        let e = TriggerEngine::default();
        assert_eq!(e.idle_timer().current_threshold_ms(), 30_000);
        assert_eq!(e.selection_timer().current_threshold_ms(), 15_000);
        let mut t = AdaptiveTimer::new(30_000, 30_000);
        t.ignore_count = 3;
        assert_eq!(t.current_threshold_ms(), 120_000);
    }

    #[test]
    fn paste_of_three_lines() {
        let mut h = Harness::new("x = 1\n");
        let ts = h.edit(10, Position::new(1, 0), "a = 1\nb = 2\nc = 3");
        assert_eq!(kinds(&ts), vec![TriggerKind::MultiLineChange]);
        assert!(ts[0].is_well_formed());
    }

    #[test]
    fn single_line_paste_is_quiet() {
        let mut h = Harness::new("x = 1\n");
        assert!(h.edit(10, Position::new(1, 0), "a = 1").is_empty());
    }

    #[test]
    fn execution_with_traceback() {
        let mut h = Harness::new("1/0\n");
        let console = "Traceback (most recent call last):\nZeroDivisionError: division by zero\n".to_owned();
        let ts = h.send(5, EventPayload::Execute { console: console.clone(), failed: true });
        assert_eq!(kinds(&ts), vec![TriggerKind::Executed]);
        assert!(ts[0].context.console_tail.as_deref().unwrap().contains("Traceback"));
    }

    #[test]
    fn caret_move_rearms_idle() {
        let mut h = Harness::new("x = 1\n");
        assert!(h.caret(20_000, 0, 3).is_empty());
        assert!(h.tick(30_000).is_empty());
        assert_eq!(h.engine.next_deadline(), Some(50_000));
        let ts = h.tick(50_000);
        assert_eq!(kinds(&ts), vec![TriggerKind::Idle]);
        assert_eq!(ts[0].fired_at_ms, 50_000);
    }

    #[test]
    fn idle_on_code_line_fires_once_per_arming() {
        let mut h = Harness::new("x = \n");
        h.caret(0, 0, 4);
        assert_eq!(kinds(&h.tick(30_000)), vec![TriggerKind::Idle]);
        assert!(h.tick(90_000).is_empty());
        assert_eq!(h.engine.next_deadline(), None);
    }

    #[test]
    fn idle_suppressed_on_blank_and_pass() {
        for text in ["\n", "def f():\n\tpass\n"] {
            let mut h = Harness::new(text);
            let line = if text.starts_with("def") { 1 } else { 0 };
            h.caret(0, line, 0);
            assert!(h.tick(30_000).is_empty());
            assert_eq!(h.engine.next_deadline(), None);
        }
    }

    #[test]
    fn selection_hold_with_backoff() {
        let mut h = Harness::new("a = 1\nb = 2\n");
        let sel = Range::lines(0, 0, 1, 5);
        h.send(0, EventPayload::SelectionChange { range: sel });
        let ts = h.tick(15_000);
        assert_eq!(kinds(&ts), vec![TriggerKind::SelectionHold]);
        h.engine.record_outcome(TriggerKind::SelectionHold, TimerOutcome::Ignored, 15_000);
        h.send(20_000, EventPayload::SelectionChange { range: Range::lines(0, 0, 0, 0) });
        h.send(21_000, EventPayload::SelectionChange { range: sel });
        assert!(h.tick(50_999).is_empty());
        assert_eq!(h.tick(51_000)[0].fired_at_ms, 51_000);
    }

    #[test]
    fn empty_selection_disarms() {
        let mut h = Harness::new("a = 1\n");
        h.send(0, EventPayload::SelectionChange { range: Range::lines(0, 0, 0, 3) });
        h.send(1_000, EventPayload::SelectionChange { range: Range::lines(0, 2, 0, 2) });
        assert!(h.tick(16_000).iter().all(|t| t.kind != TriggerKind::SelectionHold));
    }

    #[test]
    fn outcome_bookkeeping() {
        let mut h = Harness::new("x = \n");
        // never fired: no-op
        h.engine.record_outcome(TriggerKind::Idle, TimerOutcome::Ignored, 0);
        assert_eq!(h.engine.idle_timer().ignore_count, 0);
        h.caret(0, 0, 4);
        h.tick(30_000);
        h.engine.record_outcome(TriggerKind::Idle, TimerOutcome::Ignored, 30_000);
        h.engine.record_outcome(TriggerKind::Idle, TimerOutcome::Ignored, 30_000);
        assert_eq!(h.engine.idle_timer().current_threshold_ms(), 90_000);
        h.engine.record_outcome(TriggerKind::Idle, TimerOutcome::Engaged, 30_000);
        assert_eq!(h.engine.idle_timer().current_threshold_ms(), 30_000);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut h = Harness::new("");
        h.caret(100, 0, 0);
        let ev = EditorEvent::new(50, EventPayload::CaretMove { position: Position::new(0, 0) });
        let doc = h.doc.clone();
        assert_eq!(
            h.engine.on_event(&ev, &doc, &doc),
            Err(OutOfOrderEvent { event_ms: 50, last_ms: 100 })
        );
    }

    #[test]
    fn agent_edits_never_trigger_or_rearm() {
        let mut h = Harness::new("# plan\n");
        h.caret(0, 0, 6);
        let e = TextEdit::insert(Position::new(0, 6), "\na = 1\nb = 2", 0, Author::Agent);
        let ts = h.send(10_000, EventPayload::Edit { edit: e });
        assert!(ts.is_empty());
        assert_eq!(h.engine.idle_timer().armed_at_ms, Some(0));
    }

    #[test]
    fn typed_outdent_and_comment_enter() {
        let mut h = Harness::new("def f():\n\tx = 1\n");
        let ts = h.edit(1_000, Position::new(2, 0), "y");
        assert_eq!(kinds(&ts), vec![TriggerKind::BlockCompleted]);
        let block = ts[0].context.completed_block.clone().unwrap();
        assert_eq!((block.header_line, block.end_line), (0, 1));

        let mut h = Harness::new("# sort events");
        let ts = h.edit(1_000, Position::new(0, 13), "\n");
        assert_eq!(kinds(&ts), vec![TriggerKind::CommentNewline]);
        assert_eq!(ts[0].context.comment_line, Some(0));
    }

    #[test]
    fn explicit_paste_of_newline_is_multi_line() {
        let mut h = Harness::new("x = 1");
        let e = TextEdit::insert(Position::new(0, 5), "\n", 0, Author::User);
        let after = apply_edit(&h.doc, &e).unwrap();
        let ev = EditorEvent::new(5, EventPayload::Edit { edit: e });
        let ts = h.engine.on_event_with_origin(&ev, Some(EditOrigin::Paste), &h.doc, &after).unwrap();
        assert_eq!(kinds(&ts), vec![TriggerKind::MultiLineChange]);
    }

    #[test]
    fn console_tail_is_capped() {
        let long = "x".repeat(5_000) + "END";
        let tail = console_tail(&long);
        assert_eq!(tail.chars().count(), 4_000);
        assert!(tail.ends_with("END"));
    }

    #[test]
    fn completed_cooldown_knob() {
        let mut engine = TriggerEngine::new(TriggerConfig {
            completed_cooldown_ms_per_ignore: 10_000,
            ..TriggerConfig::default()
        });
        engine.start(0);
        let mut h = Harness { engine, doc: Document::new("t", "if a:\n\tb\n") };
        assert_eq!(kinds(&h.edit(100, Position::new(2, 0), "c")), vec![TriggerKind::BlockCompleted]);
        h.engine.record_outcome(TriggerKind::BlockCompleted, TimerOutcome::Ignored, 1_000);
        h.edit(1_100, Position::new(2, 1), "\nif d:\n\te\n");
        assert!(h.edit(2_000, Position::new(5, 0), "f").is_empty());
    }
}
