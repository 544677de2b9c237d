//! Breakout threads: user-opened threads, agent grouping and anchor
//! remapping after edits.

use pairloop::context::{ContextStore, GlobalEntry};
use pairloop::document::{diff_line_shift, Author, ChatScope, Position, TextEdit};

fn main() {
    let mut store = ContextStore::new(true);
    let q = store.post(Author::User, "Why does parse() fail on empty input?", ChatScope::Global, 1_000).unwrap();
    let a = store.post(Author::Agent, "It indexes tokens[0] before checking length.", ChatScope::Global, 2_000).unwrap();
    store.post(Author::User, "Thanks. Unrelated: naming?", ChatScope::Global, 3_000).unwrap();

    let grouped = store.group_messages(q, a, "Empty input in parse()", 12, 40).unwrap().clone();
    println!("grouped messages {:?} into breakout {} at line {}", grouped.message_ids, grouped.id, grouped.anchor_line);

    let thread = store.create_breakout(20, 40, Author::User, "", &[]).unwrap().id;
    store.post(Author::User, "Can this loop be a comprehension?", ChatScope::Breakout { id: thread }, 4_000).unwrap();

    for entry in store.global_view() {
        match entry {
            GlobalEntry::Message { message } => println!("  #{} {:?}: {}", message.id, message.author, message.text),
            GlobalEntry::Collapsed { breakout, summary, .. } => println!("  [breakout {breakout}] {summary}"),
        }
    }

    let insert = TextEdit::insert(Position::new(0, 0), "import sys\nimport re\n", 0, Author::User);
    store.remap_anchors(&diff_line_shift(&insert, 40));
    for b in store.breakouts() {
        println!("breakout {} now anchored at line {}", b.id, b.anchor_line);
    }
}
