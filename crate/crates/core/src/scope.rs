//! Indentation-based structure of Python source.
//!
//! This is deliberately not a parser. Lines are classified one at a time with
//! just enough string tracking to tell `#` comments and triple-quoted blocks
//! apart from code, which is all the trigger detectors need to find scope
//! headers, the blocks they own, and the moment a block is closed.

use serde::{Deserialize, Serialize};

use crate::document::{Author, Document, Position, TextEdit};

pub const DEFAULT_TAB_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineClass {
    Blank,
    Comment,
    Trivial,
    Code,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogicalLine {
    pub index: usize,
    pub indent_depth: usize,
    pub class: LineClass,
    pub opens_scope: bool,
    /// Leading whitespace mixes tabs and spaces, or has a partial space run.
    pub inconsistent: bool,
    /// Line starts inside a string opened on an earlier line.
    pub continuation: bool,
    /// A triple-quoted string is still open at the end of this line.
    pub string_open_at_end: bool,
}

impl LogicalLine {
    /// Lines that shape scopes: code (trivial included) outside strings.
    pub fn is_structural(&self) -> bool {
        matches!(self.class, LineClass::Code | LineClass::Trivial) && !self.continuation
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompletedBlock {
    pub header_line: usize,
    pub start_line: usize,
    pub end_line: usize,
}

/// A scope header and its extent. `closer` is the first structural line at or
/// below the header's depth, when one exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScopeFrame {
    pub header_line: usize,
    pub depth: usize,
    pub end_line: usize,
    pub closer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalyzerConfig {
    pub tab_width: usize,
    pub trivial_lines: Vec<String>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            tab_width: DEFAULT_TAB_WIDTH,
            trivial_lines: vec!["pass".to_owned()],
        }
    }
}

impl AnalyzerConfig {
    pub fn with_tab_width(tab_width: usize) -> Self {
        Self {
            tab_width,
            ..Self::default()
        }
    }

    pub fn analyze(&self, text: &str) -> Vec<LogicalLine> {
        analyze_with(text, self.tab_width, &self.trivial_lines)
    }
}

/// Classifies every physical line of `text` with the default trivial set.
pub fn analyze(text: &str, tab_width: usize) -> Vec<LogicalLine> {
    analyze_with(text, tab_width, &["pass".to_owned()])
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum OpenString {
    /// Triple-quoted string that forms a statement on its own (docstring).
    Doc(&'static str),
    /// Triple-quoted string opened inside an expression.
    Expr(&'static str),
}

pub fn analyze_with(text: &str, tab_width: usize, trivial: &[String]) -> Vec<LogicalLine> {
    assert!(tab_width >= 1, "tab width must be at least 1");
    if text.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<LogicalLine> = Vec::new();
    let mut open: Option<OpenString> = None;

    for (index, raw) in text.split('\n').enumerate() {
        let (depth, inconsistent) = indentation(raw, tab_width);
        let trimmed = raw.trim();
        let prev_depth = out.last().map_or(0, |l| l.indent_depth);

        if let Some(state) = open {
            let delim = match state {
                OpenString::Doc(d) | OpenString::Expr(d) => d,
            };
            let class = match state {
                OpenString::Doc(_) => LineClass::Comment,
                OpenString::Expr(_) => LineClass::Code,
            };
            let (still_open, opens_scope) = match raw.find(delim) {
                Some(pos) => {
                    let rest = scan_code(&raw[pos + delim.len()..]);
                    open = rest.open.map(OpenString::Expr);
                    (open.is_some(), rest.ends_with_colon)
                }
                None => (true, false),
            };
            out.push(LogicalLine {
                index,
                indent_depth: if trimmed.is_empty() { prev_depth } else { depth },
                class,
                opens_scope,
                inconsistent,
                continuation: true,
                string_open_at_end: still_open,
            });
            continue;
        }

        if trimmed.is_empty() {
            out.push(LogicalLine {
                index,
                indent_depth: prev_depth,
                class: LineClass::Blank,
                opens_scope: false,
                inconsistent: false,
                continuation: false,
                string_open_at_end: false,
            });
            continue;
        }

        if trimmed.starts_with('#') {
            out.push(LogicalLine {
                index,
                indent_depth: depth,
                class: LineClass::Comment,
                opens_scope: false,
                inconsistent,
                continuation: false,
                string_open_at_end: false,
            });
            continue;
        }

        if let Some(delim) = leading_triple_quote(trimmed) {
            // Docstring-style statement: comment for trigger purposes.
            let body_start = trimmed.find(delim).unwrap_or(0) + delim.len();
            let still_open = match trimmed[body_start..].find(delim) {
                Some(close) => {
                    let rest = scan_code(&trimmed[body_start + close + delim.len()..]);
                    open = rest.open.map(OpenString::Expr);
                    open.is_some()
                }
                None => {
                    open = Some(OpenString::Doc(delim));
                    true
                }
            };
            out.push(LogicalLine {
                index,
                indent_depth: depth,
                class: LineClass::Comment,
                opens_scope: false,
                inconsistent,
                continuation: false,
                string_open_at_end: still_open,
            });
            continue;
        }

        let scan = scan_code(trimmed);
        open = scan.open.map(OpenString::Expr);
        let class = if trivial.iter().any(|t| t == scan.code.trim()) {
            LineClass::Trivial
        } else {
            LineClass::Code
        };
        out.push(LogicalLine {
            index,
            indent_depth: depth,
            class,
            opens_scope: scan.ends_with_colon,
            inconsistent,
            continuation: false,
            string_open_at_end: open.is_some(),
        });
    }
    out
}

fn indentation(line: &str, tab_width: usize) -> (usize, bool) {
    let mut tabs = 0;
    let mut spaces = 0;
    for c in line.chars() {
        match c {
            '\t' => tabs += 1,
            ' ' => spaces += 1,
            _ => break,
        }
    }
    let inconsistent = (tabs > 0 && spaces > 0) || spaces % tab_width != 0;
    (tabs + spaces / tab_width, inconsistent)
}

fn leading_triple_quote(trimmed: &str) -> Option<&'static str> {
    let body = trimmed.trim_start_matches(['r', 'R', 'b', 'B', 'u', 'U', 'f', 'F']);
    if body.len() + 2 < trimmed.len() {
        return None;
    }
    if body.starts_with("\"\"\"") {
        Some("\"\"\"")
    } else if body.starts_with("'''") {
        Some("'''")
    } else {
        None
    }
}

struct CodeScan {
    /// Code with comments and string contents removed.
    code: String,
    ends_with_colon: bool,
    open: Option<&'static str>,
}

/// Scans one line of code, skipping string bodies and trailing comments.
fn scan_code(line: &str) -> CodeScan {
    let mut code = String::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    let mut open = None;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '#' => break,
            '"' | '\'' => {
                let triple = i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c;
                if triple {
                    let delim: &'static str = if c == '"' { "\"\"\"" } else { "'''" };
                    let mut j = i + 3;
                    let mut closed = false;
                    while j + 2 < chars.len() {
                        if chars[j] == '\\' {
                            j += 2;
                            continue;
                        }
                        if chars[j] == c && chars[j + 1] == c && chars[j + 2] == c {
                            closed = true;
                            break;
                        }
                        j += 1;
                    }
                    code.push_str("\"\"");
                    if closed {
                        i = j + 3;
                    } else {
                        open = Some(delim);
                        break;
                    }
                } else {
                    let mut j = i + 1;
                    while j < chars.len() && chars[j] != c {
                        if chars[j] == '\\' {
                            j += 1;
                        }
                        j += 1;
                    }
                    code.push_str("\"\"");
                    i = j + 1;
                }
            }
            _ => {
                code.push(c);
                i += 1;
            }
        }
    }
    let ends_with_colon = open.is_none() && code.trim_end().ends_with(':');
    CodeScan {
        code,
        ends_with_colon,
        open,
    }
}

/// All scope frames in an analysis, in header order.
pub fn scope_frames(lines: &[LogicalLine]) -> Vec<ScopeFrame> {
    let structural: Vec<&LogicalLine> = lines.iter().filter(|l| l.is_structural()).collect();
    let mut frames = Vec::new();
    for (k, header) in structural.iter().enumerate() {
        if !header.opens_scope {
            continue;
        }
        let mut end = header.index;
        let mut closer = None;
        for line in &structural[k + 1..] {
            if line.indent_depth <= header.indent_depth {
                closer = Some(line.index);
                break;
            }
            end = line.index;
        }
        frames.push(ScopeFrame {
            header_line: header.index,
            depth: header.indent_depth,
            end_line: end,
            closer,
        });
    }
    frames
}

/// Every non-empty block closed by the structural line at `line`, innermost
/// first.
pub fn blocks_closed_by(lines: &[LogicalLine], line: usize) -> Vec<CompletedBlock> {
    let mut frames: Vec<ScopeFrame> = scope_frames(lines)
        .into_iter()
        .filter(|f| f.closer == Some(line) && f.end_line > f.header_line)
        .collect();
    frames.sort_by(|a, b| b.depth.cmp(&a.depth).then(b.header_line.cmp(&a.header_line)));
    frames
        .into_iter()
        .map(|f| CompletedBlock {
            header_line: f.header_line,
            start_line: f.header_line,
            end_line: f.end_line,
        })
        .collect()
}

/// Blocks closed by the user's latest keystroke at `caret`, innermost first.
///
/// The caret's line must be a structural line sitting at or above the depth
/// of the scopes it closes, and the set of closed frames must differ from the
/// previous version so re-typing on an already-closing line stays quiet.
pub fn closed_blocks(prev: &[LogicalLine], curr: &[LogicalLine], caret: Position) -> Vec<CompletedBlock> {
    let Some(line) = curr.get(caret.line) else {
        return Vec::new();
    };
    if !line.is_structural() {
        return Vec::new();
    }
    if scope_frames(prev) == scope_frames(curr) {
        return Vec::new();
    }
    let closed = blocks_closed_by(curr, caret.line);
    if closed.is_empty() {
        return closed;
    }
    if prev.len() == curr.len() {
        let before = blocks_closed_by(prev, caret.line);
        if before == closed {
            return Vec::new();
        }
    }
    closed
}

/// The innermost block closed by an outdent at `caret`, if any.
pub fn detect_outdent(prev: &[LogicalLine], curr: &[LogicalLine], caret: Position) -> Option<CompletedBlock> {
    closed_blocks(prev, curr, caret).into_iter().next()
}

/// Returns the comment line a user just pressed Enter after.
///
/// Only an insertion at the very end of the line whose text is a newline plus
/// optional indentation counts. The line must be a `#` comment or the closing
/// line of a triple-quoted block.
pub fn detect_comment_newline(prev_doc: &Document, edit: &TextEdit, curr: &[LogicalLine]) -> Option<usize> {
    if edit.author != Author::User || !edit.range.is_empty() {
        return None;
    }
    let text = edit.new_text.as_str();
    if !text.starts_with('\n') || text[1..].chars().any(|c| c != ' ' && c != '\t') {
        return None;
    }
    let at = edit.range.start;
    if prev_doc.line_len(at.line) != Some(at.column) {
        return None;
    }
    let line = curr.get(at.line)?;
    (line.class == LineClass::Comment && !line.string_open_at_end).then_some(at.line)
}

/// True when the inserted text spans more than one line.
pub fn is_multi_line_change(edit: &TextEdit) -> bool {
    edit.new_text.contains('\n')
}
