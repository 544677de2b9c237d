//! Classifies each line of a Python snippet and detects the block a
//! keystroke closes.

use pairloop::document::{apply_edit, Author, Document, Position, TextEdit};
use pairloop::scope::{analyze, detect_outdent, scope_frames};

const SOURCE: &str = "\
class Stack:
    def __init__(self):
        \"\"\"Empty stack.\"\"\"
        self.items = []

    def push(self, x):
        self.items.append(x)
";

fn main() {
    let lines = analyze(SOURCE, 4);
    for (i, l) in lines.iter().enumerate() {
        println!("{i:>2} {:<12} depth={} opens={:<5} {:?}", format!("{:?}", l.class), l.indent_depth, l.opens_scope, SOURCE.lines().nth(i).unwrap_or(""));
    }
    for f in scope_frames(&lines) {
        println!("scope at line {} closes at {:?}", f.header_line, f.closer);
    }

    let before = Document::new("stack.py", SOURCE);
    let at = Position::new(before.line_count() - 1, 0);
    let after = apply_edit(&before, &TextEdit::insert(at, "s", before.version(), Author::User)).unwrap();
    let caret = Position::new(at.line, 1);
    match detect_outdent(&analyze(before.text(), 4), &analyze(after.text(), 4), caret) {
        Some(b) => println!("typing at column 0 closed the block headed at line {} (lines {}..={})", b.header_line, b.start_line, b.end_line),
        None => println!("no block closed"),
    }
}
