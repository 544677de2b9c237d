//! Versioned document buffer and the editor events that drive a session.
//!
//! Documents are immutable values: [`apply_edit`] returns a new snapshot and
//! leaves its input untouched. Columns count Unicode scalar values, not bytes,
//! and all text is normalized to LF line endings on ingestion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LANGUAGE: &str = "python3";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EditError {
    #[error("stale edit: based on version {base}, document is at version {current}")]
    StaleVersion { base: u64, current: u64 },
    #[error("invalid range {0}")]
    InvalidRange(Range),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl Position {
    pub const fn new(line: usize, column: usize) -> Self {
        Self { line, column }
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Range {
    pub start: Position,
    pub end: Position,
}

impl Range {
    pub const fn new(start: Position, end: Position) -> Self {
        Self { start, end }
    }

    pub const fn point(pos: Position) -> Self {
        Self { start: pos, end: pos }
    }

    pub fn lines(start_line: usize, start_col: usize, end_line: usize, end_col: usize) -> Self {
        Self::new(Position::new(start_line, start_col), Position::new(end_line, end_col))
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Author {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TextEdit {
    pub range: Range,
    pub new_text: String,
    pub base_version: u64,
    pub author: Author,
}

impl TextEdit {
    pub fn new(range: Range, new_text: impl Into<String>, base_version: u64, author: Author) -> Self {
        Self {
            range,
            new_text: normalize_line_endings(&new_text.into()),
            base_version,
            author,
        }
    }

    pub fn insert(at: Position, text: impl Into<String>, base_version: u64, author: Author) -> Self {
        Self::new(Range::point(at), text, base_version, author)
    }

    /// Position just past the inserted text once the edit is applied.
    pub fn inserted_end(&self) -> Position {
        end_after_insert(self.range.start, &self.new_text)
    }

    /// Range covered by the inserted text in the post-edit document.
    pub fn inserted_range(&self) -> Range {
        Range::new(self.range.start, self.inserted_end())
    }
}

/// Where text inserted at `start` ends.
pub fn end_after_insert(start: Position, text: &str) -> Position {
    let newlines = text.matches('\n').count();
    if newlines == 0 {
        Position::new(start.line, start.column + text.chars().count())
    } else {
        let tail = text.rsplit('\n').next().unwrap_or("");
        Position::new(start.line + newlines, tail.chars().count())
    }
}

pub fn normalize_line_endings(text: &str) -> String {
    if text.contains('\r') {
        text.replace("\r\n", "\n").replace('\r', "\n")
    } else {
        text.to_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    text: String,
    version: u64,
}

impl Document {
    pub fn new(id: impl Into<String>, text: &str) -> Self {
        Self {
            id: id.into(),
            text: normalize_line_endings(text),
            version: 0,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn language(&self) -> &'static str {
        LANGUAGE
    }

    /// Number of lines; an empty document still has one (empty) line.
    pub fn line_count(&self) -> usize {
        self.text.split('\n').count()
    }

    pub fn line(&self, index: usize) -> Option<&str> {
        self.text.split('\n').nth(index)
    }

    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.text.split('\n')
    }

    pub fn line_len(&self, index: usize) -> Option<usize> {
        self.line(index).map(|l| l.chars().count())
    }

    pub fn end_position(&self) -> Position {
        let last = self.line_count() - 1;
        Position::new(last, self.line_len(last).unwrap_or(0))
    }

    pub fn is_valid_position(&self, pos: Position) -> bool {
        matches!(self.line_len(pos.line), Some(len) if pos.column <= len)
    }

    pub fn is_valid_range(&self, range: Range) -> bool {
        range.start <= range.end
            && self.is_valid_position(range.start)
            && self.is_valid_position(range.end)
    }

    /// Byte offset of a position, or `None` if it does not exist.
    pub fn offset_of(&self, pos: Position) -> Option<usize> {
        let mut offset = 0;
        for (i, line) in self.text.split('\n').enumerate() {
            if i == pos.line {
                let col = line
                    .char_indices()
                    .map(|(b, _)| b)
                    .chain(std::iter::once(line.len()))
                    .nth(pos.column)?;
                return Some(offset + col);
            }
            offset += line.len() + 1;
        }
        None
    }

    pub fn slice(&self, range: Range) -> Option<&str> {
        if range.start > range.end {
            return None;
        }
        let a = self.offset_of(range.start)?;
        let b = self.offset_of(range.end)?;
        Some(&self.text[a..b])
    }
}

/// Applies `edit` to `doc`, producing the next version.
pub fn apply_edit(doc: &Document, edit: &TextEdit) -> Result<Document, EditError> {
    if edit.base_version != doc.version {
        return Err(EditError::StaleVersion {
            base: edit.base_version,
            current: doc.version,
        });
    }
    if edit.range.start > edit.range.end {
        return Err(EditError::InvalidRange(edit.range));
    }
    let (Some(a), Some(b)) = (doc.offset_of(edit.range.start), doc.offset_of(edit.range.end)) else {
        return Err(EditError::InvalidRange(edit.range));
    };
    let new_text = normalize_line_endings(&edit.new_text);
    let mut text = String::with_capacity(doc.text.len() + new_text.len());
    text.push_str(&doc.text[..a]);
    text.push_str(&new_text);
    text.push_str(&doc.text[b..]);
    Ok(Document {
        id: doc.id.clone(),
        text,
        version: doc.version + 1,
    })
}

/// Image of one pre-edit line after an edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LineTarget {
    Line(usize),
    Deleted,
}

/// Total mapping from pre-edit lines to post-edit lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineShiftMap {
    targets: Vec<LineTarget>,
}

impl LineShiftMap {
    pub fn identity(line_count: usize) -> Self {
        Self {
            targets: (0..line_count).map(LineTarget::Line).collect(),
        }
    }

    pub fn get(&self, old_line: usize) -> LineTarget {
        self.targets.get(old_line).copied().unwrap_or(LineTarget::Deleted)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.targets
            .iter()
            .enumerate()
            .all(|(i, t)| *t == LineTarget::Line(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, LineTarget)> + '_ {
        self.targets.iter().copied().enumerate()
    }

    /// Composes `self` (applied first) with `next`.
    pub fn then(&self, next: &LineShiftMap) -> LineShiftMap {
        LineShiftMap {
            targets: self
                .targets
                .iter()
                .map(|t| match t {
                    LineTarget::Line(l) => next.get(*l),
                    LineTarget::Deleted => LineTarget::Deleted,
                })
                .collect(),
        }
    }
}

/// Line mapping induced by an applied edit over a document of `line_count`
/// pre-edit lines.
///
/// Lines strictly inside a replaced multi-line span are deleted. The line
/// holding the range start keeps its identity; the line holding the range end
/// survives only when the range starts at column 0 of its own line and the
/// edit ends with a newline, i.e. a whole-line deletion or a line insertion.
pub fn diff_line_shift(edit: &TextEdit, line_count: usize) -> LineShiftMap {
    let start = edit.range.start;
    let end = edit.range.end;
    let inserted = edit.new_text.matches('\n').count();
    let removed = end.line - start.line;
    let mut targets = Vec::with_capacity(line_count);

    // Pure line insertion at column 0: the start line moves down with the text.
    let pure_line_insert = start == end && start.column == 0 && edit.new_text.ends_with('\n');
    // Whole-line deletion: "(a,0)-(b,0)" with nothing inserted.
    let whole_line_delete = start.column == 0 && end.column == 0 && edit.new_text.is_empty() && removed > 0;

    for line in 0..line_count {
        let target = if line < start.line {
            LineTarget::Line(line)
        } else if line > end.line {
            LineTarget::Line(line + inserted - removed)
        } else if pure_line_insert {
            LineTarget::Line(line + inserted)
        } else if whole_line_delete {
            if line == end.line {
                LineTarget::Line(start.line)
            } else {
                LineTarget::Deleted
            }
        } else if line == start.line {
            LineTarget::Line(line)
        } else if line == end.line && removed > 0 && inserted > 0 {
            // The end line's tail lands on the last inserted line.
            LineTarget::Line(start.line + inserted)
        } else {
            LineTarget::Deleted
        };
        targets.push(target);
    }
    LineShiftMap { targets }
}

/// Maps a position across an applied edit. Positions strictly inside the
/// replaced range have no image and yield `None`.
pub fn transform_position(pos: Position, edit: &TextEdit) -> Option<Position> {
    let r = edit.range;
    if pos < r.start || (pos == r.start && !r.is_empty()) {
        return Some(pos);
    }
    if pos < r.end {
        return None;
    }
    let new_end = edit.inserted_end();
    if pos.line == r.end.line {
        Some(Position::new(new_end.line, new_end.column + (pos.column - r.end.column)))
    } else {
        let lines_added = new_end.line as isize - r.end.line as isize;
        Some(Position::new((pos.line as isize + lines_added) as usize, pos.column))
    }
}

/// Maps a range across an applied edit; `None` if either end was swallowed.
pub fn transform_range(range: Range, edit: &TextEdit) -> Option<Range> {
    let start = transform_position(range.start, edit)?;
    let end = transform_position(range.end, edit)?;
    Some(Range::new(start, end))
}

/// Whether two ranges overlap or touch at an endpoint.
pub fn ranges_touch(a: Range, b: Range) -> bool {
    a.start <= b.end && b.start <= a.end
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum ChatScope {
    #[default]
    Global,
    Breakout { id: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum EventPayload {
    Edit { edit: TextEdit },
    CaretMove { position: Position },
    SelectionChange { range: Range },
    Execute { console: String, failed: bool },
    UserMessage { text: String, scope: ChatScope },
    BreakoutOpen { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Edit,
    CaretMove,
    SelectionChange,
    Execute,
    UserMessage,
    BreakoutOpen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EditorEvent {
    pub timestamp_ms: u64,
    pub payload: EventPayload,
}

impl EditorEvent {
    pub fn new(timestamp_ms: u64, payload: EventPayload) -> Self {
        Self { timestamp_ms, payload }
    }

    pub fn kind(&self) -> EventKind {
        match self.payload {
            EventPayload::Edit { .. } => EventKind::Edit,
            EventPayload::CaretMove { .. } => EventKind::CaretMove,
            EventPayload::SelectionChange { .. } => EventKind::SelectionChange,
            EventPayload::Execute { .. } => EventKind::Execute,
            EventPayload::UserMessage { .. } => EventKind::UserMessage,
            EventPayload::BreakoutOpen { .. } => EventKind::BreakoutOpen,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(range: Range, text: &str, base: u64) -> TextEdit {
        TextEdit::new(range, text, base, Author::User)
    }

    #[test]
    fn single_char_replacement() {
        let doc = Document::new("d", "a\nb");
        let next = apply_edit(&doc, &user(Range::lines(1, 0, 1, 1), "c", 0)).unwrap();
        assert_eq!(next.text(), "a\nc");
        assert_eq!(next.version(), 1);
        assert_eq!(doc.text(), "a\nb");
        assert_eq!(doc.version(), 0);
    }

    #[test]
    fn empty_edit_bumps_version() {
        let doc = Document::new("d", "a");
        let next = apply_edit(&doc, &user(Range::lines(0, 1, 0, 1), "", 0)).unwrap();
        assert_eq!(next.text(), "a");
        assert_eq!(next.version(), 1);
    }

    #[test]
    fn stale_base_version_rejected() {
        let doc = Document::new("d", "a");
        let doc = apply_edit(&doc, &user(Range::lines(0, 0, 0, 0), "x", 0)).unwrap();
        let err = apply_edit(&doc, &user(Range::lines(0, 0, 0, 0), "y", 0)).unwrap_err();
        assert_eq!(err, EditError::StaleVersion { base: 0, current: 1 });
    }

    #[test]
    fn invalid_ranges_rejected() {
        let doc = Document::new("d", "ab\nc");
        for r in [Range::lines(0, 3, 0, 3), Range::lines(2, 0, 2, 0), Range::lines(1, 0, 0, 1)] {
            assert_eq!(apply_edit(&doc, &user(r, "", 0)), Err(EditError::InvalidRange(r)));
        }
    }

    #[test]
    fn columns_are_code_points() {
        let doc = Document::new("d", "é=1\nx");
        let next = apply_edit(&doc, &user(Range::lines(0, 1, 0, 2), ":", 0)).unwrap();
        assert_eq!(next.text(), "é:1\nx");
        assert_eq!(doc.line_len(0), Some(3));
    }

    #[test]
    fn crlf_normalized() {
        let doc = Document::new("d", "a\r\nb\rc");
        assert_eq!(doc.text(), "a\nb\nc");
        let next = apply_edit(&doc, &user(Range::lines(0, 1, 0, 1), "\r\nz", 0)).unwrap();
        assert!(!next.text().contains('\r'));
    }

    #[test]
    fn shift_for_inserted_lines() {
        // two new lines inserted before line 3
        let e = user(Range::lines(3, 0, 3, 0), "x\ny\n", 0);
        let m = diff_line_shift(&e, 6);
        for l in 0..3 {
            assert_eq!(m.get(l), LineTarget::Line(l));
        }
        for l in 3..6 {
            assert_eq!(m.get(l), LineTarget::Line(l + 2));
        }
    }

    #[test]
    fn shift_for_deleted_lines() {
        // delete lines 4 and 5
        let e = user(Range::lines(4, 0, 6, 0), "", 0);
        let m = diff_line_shift(&e, 9);
        assert_eq!(m.get(3), LineTarget::Line(3));
        assert_eq!(m.get(4), LineTarget::Deleted);
        assert_eq!(m.get(5), LineTarget::Deleted);
        for l in 6..9 {
            assert_eq!(m.get(l), LineTarget::Line(l - 2));
        }
    }

    #[test]
    fn inline_edit_is_identity() {
        let e = user(Range::lines(2, 1, 2, 3), "zz", 0);
        assert!(diff_line_shift(&e, 5).is_identity());
    }

    #[test]
    fn transform_positions() {
        let e = user(Range::lines(1, 2, 1, 4), "a\nbcd", 0);
        assert_eq!(transform_position(Position::new(0, 5), &e), Some(Position::new(0, 5)));
        assert_eq!(transform_position(Position::new(1, 3), &e), None);
        assert_eq!(transform_position(Position::new(1, 6), &e), Some(Position::new(2, 5)));
        assert_eq!(transform_position(Position::new(3, 1), &e), Some(Position::new(4, 1)));
    }
}
