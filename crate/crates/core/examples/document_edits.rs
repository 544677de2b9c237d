//! Applies edits to a versioned document and shows how lines shift.

use pairloop::document::{apply_edit, diff_line_shift, transform_position, Author, Document, LineTarget, Position, Range, TextEdit};

fn main() {
    let doc = Document::new("main.py", "import math\n\ndef area(r):\n    return math.pi * r * r\n");
    println!("v{}:\n{}", doc.version(), doc.text());

    let insert = TextEdit::insert(Position::new(0, 0), "# geometry helpers\n", doc.version(), Author::User);
    let doc2 = apply_edit(&doc, &insert).expect("insert applies");
    println!("v{} after inserting a header comment:\n{}", doc2.version(), doc2.text());

    for (old, target) in diff_line_shift(&insert, doc.line_count()).iter() {
        match target {
            LineTarget::Line(n) => println!("  line {old} -> {n}"),
            LineTarget::Deleted => println!("  line {old} -> deleted"),
        }
    }

    let caret = Position::new(3, 4);
    println!("caret {caret} maps to {:?}", transform_position(caret, &insert));

    let stale = TextEdit::new(Range::lines(1, 0, 1, 0), "x", doc.version(), Author::User);
    match apply_edit(&doc2, &stale) {
        Ok(_) => println!("stale edit unexpectedly applied"),
        Err(e) => println!("stale edit rejected: {e}"),
    }
}
