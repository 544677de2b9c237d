//! Feeds editor events to the trigger engine and prints what fires.

use pairloop::document::{apply_edit, Author, Document, EditorEvent, EventPayload, Position, TextEdit};
use pairloop::trigger::{EditOrigin, TimerOutcome, TriggerConfig, TriggerEngine, TriggerKind};

fn edit(engine: &mut TriggerEngine, doc: &mut Document, t: u64, at: Position, text: &str, origin: EditOrigin) {
    let e = TextEdit::insert(at, text, doc.version(), Author::User);
    let after = apply_edit(doc, &e).expect("valid edit");
    let fired = engine
        .on_event_with_origin(&EditorEvent::new(t, EventPayload::Edit { edit: e }), Some(origin), doc, &after)
        .expect("events in order");
    println!("{t:>6} ms  {:<28} -> {:?}", format!("{text:?}"), fired.iter().map(|f| f.kind).collect::<Vec<_>>());
    *doc = after;
}

fn main() {
    let mut engine = TriggerEngine::new(TriggerConfig::default());
    let mut doc = Document::new("main.py", "# read the numbers");
    engine.start(0);

    edit(&mut engine, &mut doc, 1_000, Position::new(0, 18), "\n", EditOrigin::Typed);
    edit(&mut engine, &mut doc, 2_000, Position::new(1, 0), "for n in nums:\n    total += n\n", EditOrigin::Paste);
    edit(&mut engine, &mut doc, 3_000, Position::new(3, 0), "p", EditOrigin::Typed);

    let deadline = engine.next_deadline().expect("idle timer armed");
    println!("idle deadline at {deadline} ms (threshold {} ms)", engine.idle_timer().current_threshold_ms());
    for t in engine.tick(deadline, &doc) {
        println!("{:>6} ms  idle tick -> {}", t.fired_at_ms, t.kind);
    }
    engine.record_outcome(TriggerKind::Idle, TimerOutcome::Ignored, deadline + 60_000);
    println!("after one ignored idle intervention the threshold is {} ms", engine.idle_timer().current_threshold_ms());
}
