//! Drives a Codellaborator session in simulated time with the scripted
//! backend and records the full trace (inputs, outputs, episodes).
//!
//! ```text
//! cargo run --example simulated_session -- trace.jsonl
//! ```
//!
//! Without an argument the trace is printed to stdout.

use std::io::Write;
use std::path::Path;

use pairloop::document::{ChatScope, Position, Range};
use pairloop::exec::ExecutionResult;
use pairloop::session::{ClientFrame, Session, SessionConfig, TraceLine, TraceRecorder};
use pairloop::trigger::EditOrigin;

const INITIAL: &str = "# count the vowels in a word\n";

struct Driver<W: Write> {
    session: Session,
    recorder: TraceRecorder<W>,
}

impl<W: Write> Driver<W> {
    fn send(&mut self, t: u64, frame: ClientFrame) {
        let due = self.session.advance(t);
        self.recorder.outputs(&due).unwrap();
        self.recorder.input(t, &frame).unwrap();
        let out = self.session.handle(frame, t);
        self.recorder.outputs(&out).unwrap();
        self.session.take_execution_request();
    }

    fn edit(&mut self, t: u64, range: Range, text: &str, origin: EditOrigin) {
        let due = self.session.advance(t);
        self.recorder.outputs(&due).unwrap();
        let base_version = self.session.document().version();
        self.send(t, ClientFrame::Edit { base_version, range, text: text.into(), origin: Some(origin) });
    }

    fn advance_to(&mut self, t: u64) {
        let due = self.session.advance(t);
        self.recorder.outputs(&due).unwrap();
    }

    fn end_of_document(&self) -> Position {
        let doc = self.session.document();
        let last = doc.line_count() - 1;
        Position::new(last, doc.line_len(last).unwrap_or(0))
    }

    fn finished(&mut self, t: u64, result: ExecutionResult) {
        let due = self.session.advance(t);
        self.recorder.outputs(&due).unwrap();
        self.recorder.execution(t, &result).unwrap();
        let out = self.session.execution_finished(result, t);
        self.recorder.outputs(&out).unwrap();
    }

    fn end(mut self, t: u64) -> W {
        let out = self.session.finish(t);
        self.recorder.outputs(&out).unwrap();
        self.recorder.end(t).unwrap();
        self.recorder.into_inner()
    }
}

fn record<W: Write>(out: W) -> W {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut config = SessionConfig::load(&fixtures.join("configs/codellaborator.json")).expect("config");
    config.session_id = "trace-c".into();
    let backend = config.build_backend().expect("scripted backend");
    let (session, opened) = Session::open(&config, backend, INITIAL, 0).expect("session");
    let mut recorder = TraceRecorder::new(out);
    recorder
        .write(&TraceLine::header(&config.session_id, session.profile(), INITIAL, None))
        .unwrap();
    recorder.outputs(&opened).unwrap();
    let mut d = Driver { session, recorder };

    let eol = Position::new(0, INITIAL.trim_end().len());
    d.send(1_000, ClientFrame::UserMessage { text: "where do I start?".into(), scope: ChatScope::Global, compose_start_ms: Some(200) });
    d.edit(3_000, Range::point(eol), "\n", EditOrigin::Typed);
    d.advance_to(3_260);
    let at = d.end_of_document();
    d.edit(3_260, Range::point(at), "def count_vowels(word):\n    n = 0\n", EditOrigin::Paste);
    let header = at.line;
    d.send(9_000, ClientFrame::SelectionChange { range: Range::lines(header, 0, header + 1, 9) });
    d.send(30_000, ClientFrame::CreateBreakout { line: header });
    d.send(31_000, ClientFrame::UserMessage { text: "should I lowercase first?".into(), scope: ChatScope::Breakout { id: 2 }, compose_start_ms: Some(30_100) });
    d.edit(33_000, Range::point(Position::new(header + 1, 9)), "\n    return n", EditOrigin::Paste);
    d.send(40_000, ClientFrame::Execute);
    d.finished(
        40_080,
        ExecutionResult {
            stdout: String::new(),
            stderr: "Traceback (most recent call last):\nNameError: name 'word' is not defined\n".into(),
            exit_code: 1,
            duration_ms: 80,
            truncated: false,
            timed_out: false,
        },
    );
    d.end(150_000)
}

fn main() {
    match std::env::args().nth(1) {
        Some(path) => {
            let file = std::fs::File::create(&path).expect("create trace file");
            record(std::io::BufWriter::new(file));
            eprintln!("wrote {path}");
        }
        None => {
            let _ = record(std::io::stdout().lock());
        }
    }
}
