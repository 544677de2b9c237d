//! The agent's visible embodiment: AI caret and cursor, status bubble, typed
//! edit choreography, and provenance highlights on agent-written code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::ToolCall;
use crate::document::{ranges_touch, transform_position, Author, Document, Position, Range, TextEdit};

pub const DEFAULT_CHARS_PER_TICK: usize = 40;
pub const TICK_MS: u64 = 50;
pub const HIGHLIGHT_TTL_MS: u64 = 5000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChoreographyError {
    #[error("invalid range {0}")]
    InvalidRange(Range),
    #[error("insert line {0} outside document")]
    InvalidLine(i64),
    #[error("selectMessages is not a code tool")]
    NotACodeTool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bubble {
    pub emoji: String,
    pub text: String,
}

impl Bubble {
    pub fn new(emoji: &str, text: &str) -> Self {
        Self { emoji: emoji.to_owned(), text: text.to_owned() }
    }

    pub fn thinking() -> Self {
        Self::new("\u{1F914}", "Thinking...")
    }

    pub fn writing() -> Self {
        Self::new("\u{270D}\u{FE0F}", "Writing code...")
    }

    pub fn executing() -> Self {
        Self::new("\u{1F6E0}\u{FE0F}\u{1F4BB}", "Program executing...")
    }

    pub fn loading() -> Self {
        Self::new("\u{23F3}", "Loading")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProvenanceHighlight {
    pub range: Range,
    pub created_at_ms: u64,
    pub ttl_ms: u64,
}

impl ProvenanceHighlight {
    pub fn expires_at_ms(&self) -> u64 {
        self.created_at_ms + self.ttl_ms
    }
}

/// Full presence snapshot as sent to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresencePatch {
    pub ai_caret: Position,
    pub ai_cursor: Position,
    pub bubble: Option<Bubble>,
    pub selection: Option<Range>,
    pub highlights: Vec<ProvenanceHighlight>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceState {
    pub ai_caret: Position,
    pub ai_cursor: Position,
    pub bubble: Option<Bubble>,
    pub selection: Option<Range>,
    pub highlights: Vec<ProvenanceHighlight>,
    visible: bool,
}

impl PresenceState {
    pub fn new(visible: bool) -> Self {
        Self {
            ai_caret: Position::new(0, 0),
            ai_cursor: Position::new(0, 0),
            bubble: None,
            selection: None,
            highlights: Vec::new(),
            visible,
        }
    }

    pub fn visible(&self) -> bool {
        self.visible
    }

    pub fn snapshot(&self) -> PresencePatch {
        PresencePatch {
            ai_caret: self.ai_caret,
            ai_cursor: self.ai_cursor,
            bubble: self.bubble.clone(),
            selection: self.selection,
            highlights: self.highlights.clone(),
        }
    }

    fn emit(&self) -> Option<PresencePatch> {
        self.visible.then(|| self.snapshot())
    }

    pub fn set_bubble(&mut self, bubble: Option<Bubble>) -> Option<PresencePatch> {
        if self.bubble == bubble {
            return None;
        }
        self.bubble = bubble;
        self.emit()
    }

    /// Points the AI cursor at a line the agent is looking at.
    pub fn attend(&mut self, line: usize) -> Option<PresencePatch> {
        let pos = Position::new(line, 0);
        if self.ai_cursor == pos {
            return None;
        }
        self.ai_cursor = pos;
        self.emit()
    }

    pub fn add_highlight(&mut self, range: Range, now_ms: u64) -> Option<PresencePatch> {
        if !self.visible || range.is_empty() {
            return None;
        }
        self.highlights.push(ProvenanceHighlight {
            range,
            created_at_ms: now_ms,
            ttl_ms: HIGHLIGHT_TTL_MS,
        });
        self.emit()
    }

    /// Drops highlights whose lifetime is over.
    pub fn expire_highlights(&mut self, now_ms: u64) -> Option<PresencePatch> {
        let before = self.highlights.len();
        self.highlights.retain(|h| h.expires_at_ms() > now_ms);
        if self.highlights.len() == before {
            None
        } else {
            self.emit()
        }
    }

    pub fn next_expiry(&self) -> Option<u64> {
        self.highlights.iter().map(ProvenanceHighlight::expires_at_ms).min()
    }

    /// Moves presence positions and highlights across a user edit.
    pub fn follow_edit(&mut self, edit: &TextEdit) {
        let clamp = |p: Position| transform_position(p, edit).unwrap_or(edit.inserted_end());
        self.ai_caret = clamp(self.ai_caret);
        self.ai_cursor = clamp(self.ai_cursor);
        self.selection = self.selection.and_then(|r| Some(Range::new(transform_position(r.start, edit)?, transform_position(r.end, edit)?)));
        self.shift_highlights(edit);
    }

    /// Moves highlights across an edit; highlights the edit swallowed go away.
    pub fn shift_highlights(&mut self, edit: &TextEdit) {
        self.highlights.retain_mut(|h| match (transform_position(h.range.start, edit), transform_position(h.range.end, edit)) {
            (Some(s), Some(e)) => {
                h.range = Range::new(s, e);
                true
            }
            _ => false,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "step")]
pub enum ChoreoStep {
    MoveCursor { position: Position },
    Select { range: Range },
    DeleteSelection,
    #[serde(rename_all = "camelCase")]
    TypeStream { text: String, chars_per_tick: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditChoreography {
    pub steps: Vec<ChoreoStep>,
    pub source: ToolCall,
    /// The same change as a single edit.
    pub atomic: TextEdit,
}

/// The single edit a code tool call amounts to against `doc`.
pub fn atomic_edit(tool: &ToolCall, doc: &Document) -> Result<TextEdit, ChoreographyError> {
    let v = doc.version();
    match tool {
        ToolCall::InsertCode { after_line, text } => {
            if *after_line == -1 {
                let text = if text.is_empty() { String::new() } else { format!("{text}\n") };
                return Ok(TextEdit::insert(Position::new(0, 0), text, v, Author::Agent));
            }
            let line = usize::try_from(*after_line).map_err(|_| ChoreographyError::InvalidLine(*after_line))?;
            let len = doc.line_len(line).ok_or(ChoreographyError::InvalidLine(*after_line))?;
            let text = if text.is_empty() { String::new() } else { format!("\n{text}") };
            Ok(TextEdit::insert(Position::new(line, len), text, v, Author::Agent))
        }
        ToolCall::DeleteCode { range } => {
            if range.is_empty() || !doc.is_valid_range(*range) {
                return Err(ChoreographyError::InvalidRange(*range));
            }
            Ok(TextEdit::new(*range, "", v, Author::Agent))
        }
        ToolCall::ReplaceCode { range, text } => {
            if !doc.is_valid_range(*range) {
                return Err(ChoreographyError::InvalidRange(*range));
            }
            Ok(TextEdit::new(*range, text.clone(), v, Author::Agent))
        }
        ToolCall::SelectMessages { .. } => Err(ChoreographyError::NotACodeTool),
    }
}

/// Plans the visible steps that reproduce `edit`: move there, select and
/// delete what it replaces, then type the new text.
pub fn plan_steps(source: &ToolCall, edit: &TextEdit, chars_per_tick: usize) -> Vec<ChoreoStep> {
    let mut steps = vec![ChoreoStep::MoveCursor { position: edit.range.start }];
    if !edit.range.is_empty() || matches!(source, ToolCall::ReplaceCode { .. }) {
        steps.push(ChoreoStep::Select { range: edit.range });
        steps.push(ChoreoStep::DeleteSelection);
    }
    if !edit.new_text.is_empty() {
        steps.push(ChoreoStep::TypeStream {
            text: edit.new_text.clone(),
            chars_per_tick: chars_per_tick.max(1),
        });
    }
    steps
}

pub fn choreograph(tool: &ToolCall, doc: &Document) -> Result<EditChoreography, ChoreographyError> {
    choreograph_with_rate(tool, doc, DEFAULT_CHARS_PER_TICK)
}

pub fn choreograph_with_rate(tool: &ToolCall, doc: &Document, chars_per_tick: usize) -> Result<EditChoreography, ChoreographyError> {
    let atomic = atomic_edit(tool, doc)?;
    Ok(EditChoreography {
        steps: plan_steps(tool, &atomic, chars_per_tick),
        source: tool.clone(),
        atomic,
    })
}

/// What one tick of a running choreography produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub edit: Option<TextEdit>,
    pub patch: Option<PresencePatch>,
    pub done: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("user edit at {edit_range} overlaps agent edit region {region}; remaining agent edit dropped")]
pub struct ChoreographyAborted {
    pub edit_range: Range,
    pub region: Range,
}

/// Plays a choreography one step per tick. Positions are tracked in the
/// live document, so user edits elsewhere simply shift the remaining work.
#[derive(Debug, Clone)]
pub struct ChoreographyRunner {
    steps: Vec<ChoreoStep>,
    next: usize,
    target: Range,
    caret: Position,
    typed_from: Option<Position>,
    typed_chars: usize,
}

impl ChoreographyRunner {
    pub fn new(choreo: &EditChoreography) -> Self {
        Self {
            steps: choreo.steps.clone(),
            next: 0,
            target: choreo.atomic.range,
            caret: choreo.atomic.range.start,
            typed_from: None,
            typed_chars: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.steps.len()
    }

    /// Document region the agent is working on right now.
    pub fn region(&self) -> Range {
        match self.typed_from {
            Some(from) => Range::new(from, self.caret),
            None => self.target,
        }
    }

    /// Range of text typed so far.
    pub fn typed_range(&self) -> Option<Range> {
        self.typed_from.map(|from| Range::new(from, self.caret))
    }

    pub fn step(&mut self, doc: &Document, presence: &mut PresenceState) -> StepOutput {
        let Some(step) = self.steps.get(self.next).cloned() else {
            return StepOutput { done: true, ..Default::default() };
        };
        let mut edit = None;
        match step {
            ChoreoStep::MoveCursor { .. } => {
                self.caret = self.target.start;
                presence.ai_caret = self.caret;
                presence.ai_cursor = self.caret;
                self.next += 1;
            }
            ChoreoStep::Select { .. } => {
                presence.selection = Some(self.target);
                self.next += 1;
            }
            ChoreoStep::DeleteSelection => {
                if !self.target.is_empty() {
                    edit = Some(TextEdit::new(self.target, "", doc.version(), Author::Agent));
                }
                self.target = Range::point(self.target.start);
                self.caret = self.target.start;
                presence.selection = None;
                presence.ai_caret = self.caret;
                self.next += 1;
            }
            ChoreoStep::TypeStream { text, chars_per_tick } => {
                let chunk: String = text.chars().skip(self.typed_chars).take(chars_per_tick).collect();
                let chunk_len = chunk.chars().count();
                self.typed_from.get_or_insert(self.caret);
                let e = TextEdit::insert(self.caret, chunk, doc.version(), Author::Agent);
                self.caret = e.inserted_end();
                self.typed_chars += chunk_len;
                presence.ai_caret = self.caret;
                presence.ai_cursor = self.caret;
                edit = Some(e);
                if self.typed_chars >= text.chars().count() {
                    self.next += 1;
                }
            }
        }
        let done = self.is_done();
        StepOutput {
            edit,
            patch: presence.visible().then(|| presence.snapshot()),
            done,
        }
    }

    /// Accounts for a user edit made while the choreography runs. An edit
    /// touching the agent's region aborts the rest of the choreography.
    pub fn on_user_edit(&mut self, edit: &TextEdit) -> Result<(), ChoreographyAborted> {
        let region = self.region();
        if ranges_touch(edit.range, region) {
            self.next = self.steps.len();
            return Err(ChoreographyAborted { edit_range: edit.range, region });
        }
        let shift = |p: Position| transform_position(p, edit).unwrap_or(p);
        self.target = Range::new(shift(self.target.start), shift(self.target.end));
        self.caret = shift(self.caret);
        self.typed_from = self.typed_from.map(shift);
        Ok(())
    }
}

/// Runs a choreography to completion on `doc` with no interference.
pub fn play(choreo: &EditChoreography, doc: &Document, presence: &mut PresenceState) -> (Document, Vec<StepOutput>) {
    let mut runner = ChoreographyRunner::new(choreo);
    let mut doc = doc.clone();
    let mut outputs = Vec::new();
    while !runner.is_done() {
        let out = runner.step(&doc, presence);
        if let Some(e) = &out.edit {
            doc = crate::document::apply_edit(&doc, e).expect("choreography edit is valid on its own document");
        }
        outputs.push(out);
    }
    (doc, outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::apply_edit;

    fn doc() -> Document {
        Document::new("t", "a = 1\nb = 2\nc = 3\nd = 4\ne = 5\nf = 6")
    }

    #[test]
    fn replace_plan_has_four_steps_and_matches_atomic() {
        let d = doc();
        let tool = ToolCall::ReplaceCode { range: Range::lines(3, 0, 5, 5), text: "x = 0\ny = 0".into() };
        let c = choreograph(&tool, &d).unwrap();
        assert_eq!(c.steps.len(), 4);
        let (played, _) = play(&c, &d, &mut PresenceState::new(true));
        assert_eq!(played.text(), apply_edit(&d, &c.atomic).unwrap().text());
    }

    #[test]
    fn degenerate_plans() {
        let d = doc();
        let c = choreograph(&ToolCall::InsertCode { after_line: 2, text: String::new() }, &d).unwrap();
        assert_eq!(c.steps, vec![ChoreoStep::MoveCursor { position: Position::new(2, 5) }]);
        let empty = Range::lines(1, 1, 1, 1);
        assert_eq!(
            choreograph(&ToolCall::DeleteCode { range: empty }, &d).unwrap_err(),
            ChoreographyError::InvalidRange(empty)
        );
        let del = choreograph(&ToolCall::DeleteCode { range: Range::lines(0, 0, 1, 0) }, &d).unwrap();
        assert_eq!(del.steps.len(), 3);
    }

    #[test]
    fn insert_at_top_and_after_line() {
        let d = Document::new("t", "x\ny");
        let top = choreograph(&ToolCall::InsertCode { after_line: -1, text: "# hi".into() }, &d).unwrap();
        assert_eq!(apply_edit(&d, &top.atomic).unwrap().text(), "# hi\nx\ny");
        let after = choreograph(&ToolCall::InsertCode { after_line: 0, text: "z".into() }, &d).unwrap();
        assert_eq!(apply_edit(&d, &after.atomic).unwrap().text(), "x\nz\ny");
        assert!(choreograph(&ToolCall::InsertCode { after_line: 2, text: "z".into() }, &d).is_err());
    }

    #[test]
    fn eighty_chars_take_two_typing_ticks() {
        let d = doc();
        let text = "#".repeat(79);
        let c = choreograph(&ToolCall::InsertCode { after_line: 0, text }, &d).unwrap();
        let (_, outputs) = play(&c, &d, &mut PresenceState::new(true));
        let typing: Vec<_> = outputs.iter().filter(|o| o.edit.is_some()).collect();
        assert_eq!(typing.len(), 2);
        assert!(outputs.iter().all(|o| o.patch.is_some()));
        let (_, hidden) = play(&c, &d, &mut PresenceState::new(false));
        assert!(hidden.iter().all(|o| o.patch.is_none()));
    }

    #[test]
    fn overlapping_user_edit_aborts_disjoint_edit_shifts() {
        let d = doc();
        let tool = ToolCall::InsertCode { after_line: 3, text: "z".repeat(100) };
        let c = choreograph(&tool, &d).unwrap();
        let mut presence = PresenceState::new(true);

        let mut runner = ChoreographyRunner::new(&c);
        let mut cur = d.clone();
        for _ in 0..2 {
            let out = runner.step(&cur, &mut presence);
            if let Some(e) = out.edit {
                cur = apply_edit(&cur, &e).unwrap();
            }
        }
        let above = TextEdit::insert(Position::new(0, 0), "# top\n", cur.version(), Author::User);
        cur = apply_edit(&cur, &above).unwrap();
        runner.on_user_edit(&above).unwrap();
        while !runner.is_done() {
            if let Some(e) = runner.step(&cur, &mut presence).edit {
                cur = apply_edit(&cur, &e).unwrap();
            }
        }
        let expected = apply_edit(&apply_edit(&d, &c.atomic).unwrap(), &TextEdit::insert(Position::new(0, 0), "# top\n", 1, Author::User)).unwrap();
        assert_eq!(cur.text(), expected.text());

        let mut runner = ChoreographyRunner::new(&c);
        let mut cur = d.clone();
        for _ in 0..2 {
            if let Some(e) = runner.step(&cur, &mut presence).edit {
                cur = apply_edit(&cur, &e).unwrap();
            }
        }
        let inside = TextEdit::insert(Position::new(4, 3), "!", cur.version(), Author::User);
        assert!(runner.on_user_edit(&inside).is_err());
        assert!(runner.is_done());
    }

    #[test]
    fn highlight_ttl_boundary() {
        let mut p = PresenceState::new(true);
        assert!(p.expire_highlights(10).is_none());
        p.add_highlight(Range::lines(0, 0, 0, 3), 0);
        assert!(p.expire_highlights(4999).is_none());
        assert!(p.expire_highlights(5000).is_some());
        assert!(p.highlights.is_empty());
    }

    #[test]
    fn hidden_presence_never_patches() {
        let mut p = PresenceState::new(false);
        assert!(p.set_bubble(Some(Bubble::thinking())).is_none());
        assert!(p.attend(3).is_none());
        assert!(p.add_highlight(Range::lines(0, 0, 0, 1), 0).is_none());
        assert!(p.highlights.is_empty());
    }
}
