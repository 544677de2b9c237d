//! Plays an agent edit as visible steps and checks it lands where the
//! atomic edit would.

use pairloop::agent::ToolCall;
use pairloop::document::{apply_edit, Document, Range};
use pairloop::presence::{choreograph_with_rate, play, PresenceState};

fn main() {
    let doc = Document::new("main.py", "total = 0\nfor n in nums:\n    total = total + n\n");
    let tool = ToolCall::ReplaceCode { range: Range::lines(2, 4, 2, 21), text: "total += n".into() };
    let choreo = choreograph_with_rate(&tool, &doc, 4).expect("valid tool call");
    for step in &choreo.steps {
        println!("step {}", serde_json::to_string(step).unwrap());
    }

    let mut presence = PresenceState::new(true);
    let (played, ticks) = play(&choreo, &doc, &mut presence);
    for (i, t) in ticks.iter().enumerate() {
        if let Some(p) = &t.patch {
            println!("tick {i:>2}: ai caret {} bubble {:?}", p.ai_caret, p.bubble.as_ref().map(|b| b.text.as_str()));
        }
    }
    let atomic = apply_edit(&doc, &choreo.atomic).unwrap();
    println!("final text matches atomic edit: {}", played.text() == atomic.text());
    print!("{}", played.text());

    presence.add_highlight(choreo.atomic.inserted_range(), 1_000);
    println!("highlight expires at {:?} ms", presence.next_expiry());
    presence.expire_highlights(6_000);
    println!("highlights after expiry: {}", presence.highlights.len());
}
