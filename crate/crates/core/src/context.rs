//! Global chat, line-anchored breakout threads, and message grouping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{Author, ChatScope, LineShiftMap, LineTarget};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("breakouts are disabled for this session")]
    FeatureDisabled,
    #[error("line {line} is outside the document ({line_count} lines)")]
    InvalidLine { line: usize, line_count: usize },
    #[error("invalid message range {from}..={to}")]
    InvalidRange { from: u64, to: u64 },
    #[error("agent-created breakouts need a summary")]
    EmptySummary,
    #[error("unknown breakout {0}")]
    UnknownBreakout(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatMessage {
    pub id: u64,
    pub author: Author,
    pub text: String,
    pub timestamp_ms: u64,
    pub scope: ChatScope,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapsed_into: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BreakoutState {
    Open,
    Collapsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Breakout {
    pub id: u64,
    pub anchor_line: usize,
    pub summary: String,
    pub message_ids: Vec<u64>,
    pub created_by: Author,
    pub state: BreakoutState,
}

/// One row of the global chat panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum GlobalEntry<'a> {
    Message { message: &'a ChatMessage },
    Collapsed { breakout: u64, summary: &'a str, anchor_line: usize, message_ids: &'a [u64] },
}

#[derive(Debug, Clone)]
pub struct ContextStore {
    enabled: bool,
    messages: Vec<ChatMessage>,
    breakouts: Vec<Breakout>,
    next_message: u64,
    next_breakout: u64,
}

impl ContextStore {
    pub fn new(breakouts_enabled: bool) -> Self {
        Self {
            enabled: breakouts_enabled,
            messages: Vec::new(),
            breakouts: Vec::new(),
            next_message: 1,
            next_breakout: 1,
        }
    }

    pub fn breakouts_enabled(&self) -> bool {
        self.enabled
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn breakouts(&self) -> &[Breakout] {
        &self.breakouts
    }

    pub fn message(&self, id: u64) -> Option<&ChatMessage> {
        self.messages.iter().find(|m| m.id == id)
    }

    pub fn breakout(&self, id: u64) -> Option<&Breakout> {
        self.breakouts.iter().find(|b| b.id == id)
    }

    pub fn post(&mut self, author: Author, text: impl Into<String>, scope: ChatScope, timestamp_ms: u64) -> Result<u64, ContextError> {
        if let ChatScope::Breakout { id } = scope {
            if self.breakout(id).is_none() {
                return Err(ContextError::UnknownBreakout(id));
            }
        }
        let id = self.next_message;
        self.next_message += 1;
        self.messages.push(ChatMessage {
            id,
            author,
            text: text.into(),
            timestamp_ms,
            scope: scope.clone(),
            collapsed_into: None,
        });
        if let ChatScope::Breakout { id: b } = scope {
            if let Some(breakout) = self.breakouts.iter_mut().find(|x| x.id == b) {
                breakout.message_ids.push(id);
            }
        }
        Ok(id)
    }

    /// Opens an empty (or seeded) thread anchored at `anchor_line`.
    pub fn create_breakout(
        &mut self,
        anchor_line: usize,
        line_count: usize,
        created_by: Author,
        summary: impl Into<String>,
        seed: &[u64],
    ) -> Result<&Breakout, ContextError> {
        if !self.enabled {
            return Err(ContextError::FeatureDisabled);
        }
        if anchor_line >= line_count {
            return Err(ContextError::InvalidLine { line: anchor_line, line_count });
        }
        let summary = summary.into();
        if created_by == Author::Agent && summary.trim().is_empty() {
            return Err(ContextError::EmptySummary);
        }
        for id in seed {
            match self.message(*id) {
                Some(m) if m.collapsed_into.is_none() && m.scope == ChatScope::Global => {}
                _ => return Err(ContextError::InvalidRange { from: *id, to: *id }),
            }
        }
        let id = self.next_breakout;
        self.next_breakout += 1;
        for m in self.messages.iter_mut().filter(|m| seed.contains(&m.id)) {
            m.collapsed_into = Some(id);
        }
        self.breakouts.push(Breakout {
            id,
            anchor_line,
            summary,
            message_ids: seed.to_vec(),
            created_by,
            state: BreakoutState::Open,
        });
        Ok(self.breakouts.last().expect("just pushed"))
    }

    /// Moves global messages `from..=to` into a new agent-created breakout.
    /// Breakout-scoped messages that fall inside the id range are skipped.
    pub fn group_messages(
        &mut self,
        from: u64,
        to: u64,
        summary: &str,
        anchor_line: usize,
        line_count: usize,
    ) -> Result<&Breakout, ContextError> {
        if !self.enabled {
            return Err(ContextError::FeatureDisabled);
        }
        let bad = ContextError::InvalidRange { from, to };
        if from > to {
            return Err(bad);
        }
        let is_global = |m: Option<&ChatMessage>| matches!(m, Some(m) if m.scope == ChatScope::Global);
        if !is_global(self.message(from)) || !is_global(self.message(to)) {
            return Err(bad);
        }
        let ids: Vec<u64> = self
            .messages
            .iter()
            .filter(|m| m.id >= from && m.id <= to && m.scope == ChatScope::Global)
            .map(|m| m.id)
            .collect();
        if ids.iter().any(|id| self.message(*id).is_some_and(|m| m.collapsed_into.is_some())) {
            return Err(bad);
        }
        let created = self.create_breakout(anchor_line, line_count, Author::Agent, summary, &ids)?.id;
        if let Some(b) = self.breakouts.iter_mut().find(|b| b.id == created) {
            b.state = BreakoutState::Collapsed;
        }
        Ok(self.breakout(created).expect("created"))
    }

    pub fn set_state(&mut self, id: u64, state: BreakoutState) -> Result<(), ContextError> {
        let b = self
            .breakouts
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or(ContextError::UnknownBreakout(id))?;
        b.state = state;
        Ok(())
    }

    /// Re-anchors every breakout after an edit. An anchor whose line was
    /// deleted falls back to the nearest surviving line above it, or line 0.
    pub fn remap_anchors(&mut self, shift: &LineShiftMap) {
        for b in &mut self.breakouts {
            b.anchor_line = remap_line(b.anchor_line, shift);
        }
    }

    /// What the global chat panel shows: ordinary messages plus one collapsed
    /// component per grouped breakout, placed where its first message was.
    pub fn global_view(&self) -> Vec<GlobalEntry<'_>> {
        let mut out = Vec::new();
        let mut seen = Vec::new();
        for m in self.messages.iter().filter(|m| m.scope == ChatScope::Global) {
            match m.collapsed_into {
                None => out.push(GlobalEntry::Message { message: m }),
                Some(b) if !seen.contains(&b) => {
                    seen.push(b);
                    if let Some(bk) = self.breakout(b) {
                        out.push(GlobalEntry::Collapsed {
                            breakout: b,
                            summary: &bk.summary,
                            anchor_line: bk.anchor_line,
                            message_ids: &bk.message_ids,
                        });
                    }
                }
                Some(_) => {}
            }
        }
        out
    }

    /// Messages of a breakout thread in their original order.
    pub fn expand(&self, breakout: u64) -> Result<Vec<&ChatMessage>, ContextError> {
        let b = self.breakout(breakout).ok_or(ContextError::UnknownBreakout(breakout))?;
        Ok(b.message_ids.iter().filter_map(|id| self.message(*id)).collect())
    }

    /// Messages visible to the agent in `scope`, oldest first: uncollapsed
    /// global messages, or the thread of one breakout.
    pub fn scope_messages(&self, scope: &ChatScope) -> Vec<&ChatMessage> {
        match scope {
            ChatScope::Global => self
                .messages
                .iter()
                .filter(|m| m.scope == ChatScope::Global && m.collapsed_into.is_none())
                .collect(),
            ChatScope::Breakout { id } => self.expand(*id).unwrap_or_default(),
        }
    }

    /// Uncollapsed global messages, the candidates for grouping.
    pub fn ungrouped_global(&self) -> impl Iterator<Item = &ChatMessage> {
        self.messages
            .iter()
            .filter(|m| m.scope == ChatScope::Global && m.collapsed_into.is_none())
    }
}

pub fn remap_line(line: usize, shift: &LineShiftMap) -> usize {
    if let LineTarget::Line(l) = shift.get(line) {
        return l;
    }
    (0..line.min(shift.len()))
        .rev()
        .find_map(|l| match shift.get(l) {
            LineTarget::Line(n) => Some(n),
            LineTarget::Deleted => None,
        })
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::{diff_line_shift, Range, TextEdit};

    fn store_with(n: usize) -> ContextStore {
        let mut s = ContextStore::new(true);
        for i in 0..n {
            let author = if i % 2 == 0 { Author::User } else { Author::Agent };
            s.post(author, format!("m{}", i + 1), ChatScope::Global, i as u64).unwrap();
        }
        s
    }

    #[test]
    fn manual_breakout_at_line_30() {
        let mut s = ContextStore::new(true);
        let b = s.create_breakout(30, 40, Author::User, "", &[]).unwrap().clone();
        assert_eq!(b.anchor_line, 30);
        assert!(b.message_ids.is_empty());
        let id = s.post(Author::User, "help with sorting", ChatScope::Breakout { id: b.id }, 5).unwrap();
        assert_eq!(s.breakout(b.id).unwrap().message_ids, vec![id]);
        assert!(s.scope_messages(&ChatScope::Global).is_empty());
    }

    #[test]
    fn breakout_errors() {
        let mut off = ContextStore::new(false);
        assert_eq!(off.create_breakout(0, 5, Author::User, "", &[]).unwrap_err(), ContextError::FeatureDisabled);
        let mut s = ContextStore::new(true);
        assert_eq!(
            s.create_breakout(5, 5, Author::User, "", &[]).unwrap_err(),
            ContextError::InvalidLine { line: 5, line_count: 5 }
        );
        assert_eq!(s.create_breakout(1, 5, Author::Agent, " ", &[]).unwrap_err(), ContextError::EmptySummary);
    }

    #[test]
    fn grouping_collapses_and_expands() {
        let mut s = store_with(10);
        let b = s.group_messages(4, 9, "sorting implementation", 30, 50).unwrap().clone();
        assert_eq!(b.message_ids, vec![4, 5, 6, 7, 8, 9]);
        assert_eq!(b.state, BreakoutState::Collapsed);
        let view = s.global_view();
        assert_eq!(view.len(), 3 + 1 + 1);
        assert!(matches!(view[3], GlobalEntry::Collapsed { summary: "sorting implementation", anchor_line: 30, .. }));
        let texts: Vec<_> = s.expand(b.id).unwrap().iter().map(|m| m.text.clone()).collect();
        assert_eq!(texts, ["m4", "m5", "m6", "m7", "m8", "m9"]);
        assert_eq!(s.messages().len(), 10);
    }

    #[test]
    fn grouping_errors() {
        let mut s = store_with(10);
        assert_eq!(s.group_messages(9, 4, "x", 0, 5).unwrap_err(), ContextError::InvalidRange { from: 9, to: 4 });
        s.group_messages(2, 3, "x", 0, 5).unwrap();
        assert_eq!(s.group_messages(1, 4, "y", 0, 5).unwrap_err(), ContextError::InvalidRange { from: 1, to: 4 });
        assert_eq!(s.group_messages(11, 12, "y", 0, 5).unwrap_err(), ContextError::InvalidRange { from: 11, to: 12 });
        let mut off = ContextStore::new(false);
        assert_eq!(off.group_messages(1, 1, "y", 0, 5).unwrap_err(), ContextError::FeatureDisabled);
    }

    #[test]
    fn anchors_follow_edits() {
        let mut s = ContextStore::new(true);
        s.create_breakout(30, 40, Author::User, "", &[]).unwrap();
        let insert = TextEdit::insert(crate::document::Position::new(10, 0), "a\nb\n", 0, Author::User);
        s.remap_anchors(&diff_line_shift(&insert, 40));
        assert_eq!(s.breakouts()[0].anchor_line, 32);

        let mut s = ContextStore::new(true);
        s.create_breakout(30, 40, Author::User, "", &[]).unwrap();
        let delete = TextEdit::new(Range::lines(30, 0, 31, 0), "", 0, Author::User);
        s.remap_anchors(&diff_line_shift(&delete, 40));
        assert_eq!(s.breakouts()[0].anchor_line, 29);

        s.remap_anchors(&LineShiftMap::identity(39));
        assert_eq!(s.breakouts()[0].anchor_line, 29);
    }

    #[test]
    fn deleted_first_lines_fall_back_to_zero() {
        let mut s = ContextStore::new(true);
        s.create_breakout(1, 5, Author::User, "", &[]).unwrap();
        let delete = TextEdit::new(Range::lines(0, 0, 2, 0), "", 0, Author::User);
        s.remap_anchors(&diff_line_shift(&delete, 5));
        assert_eq!(s.breakouts()[0].anchor_line, 0);
    }
}
