use pairloop::agent::ToolCall;
use pairloop::document::{apply_edit, diff_line_shift, Author, Document, LineShiftMap, LineTarget, Position, Range, TextEdit};
use pairloop::presence::{choreograph_with_rate, play, PresenceState};
use proptest::prelude::*;
use proptest::sample::Index;

type Seed = (Index, Index);

fn lines_strategy() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-zé =]{0,6}", 1..7)
}

fn insert_strategy() -> impl Strategy<Value = String> {
    "[a-zé \n]{0,10}"
}

fn resolve(doc: &Document, (line, col): Seed) -> Position {
    let l = line.index(doc.line_count());
    Position::new(l, col.index(doc.line_len(l).unwrap_or(0) + 1))
}

fn ordered(a: Position, b: Position) -> Range {
    if a <= b {
        Range::new(a, b)
    } else {
        Range::new(b, a)
    }
}

/// Reference edit over a grid of characters.
fn oracle(lines: &[Vec<char>], range: Range, text: &str) -> Vec<Vec<char>> {
    let (s, e) = (range.start, range.end);
    let mut joined: Vec<char> = lines[s.line][..s.column].to_vec();
    joined.extend(text.chars());
    joined.extend_from_slice(&lines[e.line][e.column..]);
    let replacement: Vec<Vec<char>> = joined.split(|c| *c == '\n').map(|l| l.to_vec()).collect();
    let mut out = lines[..s.line].to_vec();
    out.extend(replacement);
    out.extend_from_slice(&lines[e.line + 1..]);
    out
}

fn grid(doc: &Document) -> Vec<Vec<char>> {
    doc.text().split('\n').map(|l| l.chars().collect()).collect()
}

fn edit_on(doc: &Document, a: Seed, b: Seed, text: &str) -> TextEdit {
    TextEdit::new(ordered(resolve(doc, a), resolve(doc, b)), text, doc.version(), Author::User)
}

fn untouched(line: usize, edit: &TextEdit) -> bool {
    line < edit.range.start.line || line > edit.range.end.line
}

fn assert_monotone(map: &LineShiftMap, new_len: usize) -> Result<(), TestCaseError> {
    let mut last = None;
    for (_, t) in map.iter() {
        if let LineTarget::Line(n) = t {
            prop_assert!(n < new_len, "target {} out of {} lines", n, new_len);
            prop_assert!(last.is_none_or(|p| p < n), "targets not increasing");
            last = Some(n);
        }
    }
    Ok(())
}

proptest! {
    #[test]
    fn apply_edit_matches_char_grid(lines in lines_strategy(), a: Seed, b: Seed, text in insert_strategy()) {
        let doc = Document::new("p", &lines.join("\n"));
        let edit = edit_on(&doc, a, b, &text);
        let got = apply_edit(&doc, &edit).unwrap();
        prop_assert_eq!(grid(&got), oracle(&grid(&doc), edit.range, &text));
        prop_assert_eq!(got.version(), doc.version() + 1);
    }

    #[test]
    fn line_shift_keeps_untouched_lines(lines in lines_strategy(), a: Seed, b: Seed, text in insert_strategy()) {
        let doc = Document::new("p", &lines.join("\n"));
        let edit = edit_on(&doc, a, b, &text);
        let after = apply_edit(&doc, &edit).unwrap();
        let map = diff_line_shift(&edit, doc.line_count());
        prop_assert_eq!(map.len(), doc.line_count());
        assert_monotone(&map, after.line_count())?;
        for (old, t) in map.iter() {
            if untouched(old, &edit) {
                let LineTarget::Line(n) = t else {
                    return Err(TestCaseError::fail(format!("line {old} outside the edit was deleted")));
                };
                prop_assert_eq!(after.line(n), doc.line(old));
            }
        }
    }

    #[test]
    fn line_shift_composes(
        lines in lines_strategy(),
        first: (Seed, Seed), t1 in insert_strategy(),
        second: (Seed, Seed), t2 in insert_strategy(),
    ) {
        let d0 = Document::new("p", &lines.join("\n"));
        let e1 = edit_on(&d0, first.0, first.1, &t1);
        let d1 = apply_edit(&d0, &e1).unwrap();
        let e2 = edit_on(&d1, second.0, second.1, &t2);
        let d2 = apply_edit(&d1, &e2).unwrap();
        let m1 = diff_line_shift(&e1, d0.line_count());
        let composed = m1.then(&diff_line_shift(&e2, d1.line_count()));
        assert_monotone(&composed, d2.line_count())?;
        for (old, t) in composed.iter() {
            let LineTarget::Line(mid) = m1.get(old) else { continue };
            if untouched(old, &e1) && untouched(mid, &e2) {
                let LineTarget::Line(n) = t else {
                    return Err(TestCaseError::fail(format!("line {old} untouched by both edits was deleted")));
                };
                prop_assert_eq!(d2.line(n), d0.line(old));
            }
        }
        prop_assert!(LineShiftMap::identity(d0.line_count()).then(&m1) == m1);
    }

    #[test]
    fn choreography_equals_atomic_edit(
        lines in lines_strategy(),
        kind in 0..3u8,
        a: Seed, b: Seed,
        after_line: Index,
        text in "[a-z =\n]{0,12}",
        rate in 1..10usize,
    ) {
        let doc = Document::new("p", &lines.join("\n"));
        let range = ordered(resolve(&doc, a), resolve(&doc, b));
        let tool = match kind {
            0 => ToolCall::InsertCode { after_line: after_line.index(doc.line_count() + 1) as i64 - 1, text },
            1 if !range.is_empty() => ToolCall::DeleteCode { range },
            _ => ToolCall::ReplaceCode { range, text },
        };
        let choreo = choreograph_with_rate(&tool, &doc, rate).unwrap();
        let (played, _) = play(&choreo, &doc, &mut PresenceState::new(true));
        let atomic = apply_edit(&doc, &choreo.atomic).unwrap();
        prop_assert_eq!(played.text().as_bytes(), atomic.text().as_bytes());
    }
}
