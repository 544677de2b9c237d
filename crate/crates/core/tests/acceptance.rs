//! Headless acceptance suite. Each check prints one PASS/FAIL line; the
//! process exits nonzero if any check fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use pairloop::agent::backend::FixtureItem;
use pairloop::agent::{ScriptedBackend, ToolCall, ToolInvocation};
use pairloop::document::{apply_edit, end_after_insert, Author, ChatScope, Document, EditorEvent, EventPayload, Position, Range, TextEdit};
use pairloop::policy::ConditionProfile;
use pairloop::presence::{choreograph_with_rate, play, PresenceState};
use pairloop::scope::{analyze, detect_outdent, CompletedBlock};
use pairloop::session::{replay_file, ClientFrame, ServerFrame, Session, SessionConfig, SessionOutput, TurnStatus};
use pairloop::trigger::{EditOrigin, TriggerConfig, TriggerEngine, TriggerKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn config(name: &str) -> SessionConfig {
    SessionConfig::load(&fixture(&format!("configs/{name}.json"))).expect("bundled config")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scripted(entries: Vec<(&str, Vec<FixtureItem>)>) -> Arc<ScriptedBackend> {
    let mut b = ScriptedBackend::default();
    for (ty, items) in entries {
        b.insert(ScriptedBackend::fallback_key(ty), items);
    }
    Arc::new(b)
}

fn text(t: &str, delay_ms: u64) -> FixtureItem {
    FixtureItem::Text { text: t.into(), delay_ms }
}

fn open(profile: ConditionProfile, backend: Arc<ScriptedBackend>, initial: &str) -> Session {
    Session::open(&SessionConfig::with_profile(profile), backend, initial, 0).expect("session opens").0
}

fn frames(out: &[SessionOutput]) -> impl Iterator<Item = (u64, &ServerFrame)> {
    out.iter().filter_map(|o| match o {
        SessionOutput::Frame(env) => Some((env.t, &env.frame)),
        _ => None,
    })
}

fn started_at(out: &[SessionOutput], kind: TriggerKind) -> Vec<u64> {
    frames(out)
        .filter_map(|(t, f)| match f {
            ServerFrame::TriggerDiagnostic { trigger: Some(k), status: TurnStatus::Started, .. } if *k == kind => Some(t),
            _ => None,
        })
        .collect()
}

fn agent_messages(out: &[SessionOutput]) -> Vec<String> {
    frames(out)
        .filter_map(|(_, f)| match f {
            ServerFrame::AgentMessage { text, .. } => Some(text.clone()),
            _ => None,
        })
        .collect()
}

fn agent_actions(out: &[SessionOutput]) -> usize {
    frames(out).filter(|(_, f)| f.is_agent_action()).count()
}

fn idle_backoff() -> Outcome {
    let cfg = config("codellaborator");
    let (mut s, _) = Session::open(&cfg, cfg.build_backend().map_err(|e| e.to_string())?, "x = 1\n", 0).map_err(|e| e.to_string())?;
    let mut activity = 0;
    let mut thresholds = Vec::new();
    for round in 1..=3u64 {
        let mut fired = Vec::new();
        let mut t = activity;
        while fired.is_empty() && t < activity + 200_000 {
            t += 1_000;
            fired = started_at(&s.advance(t), TriggerKind::Idle);
        }
        let at = *fired.first().ok_or_else(|| format!("idle never fired in round {round}"))?;
        thresholds.push(at - activity);
        // Let the unanswered episode close as ignored, then touch the editor.
        activity = at + 100_000;
        s.advance(activity);
        s.handle(ClientFrame::CaretMove { position: Position::new(0, round as usize) }, activity);
    }
    ensure(thresholds == [30_000, 60_000, 90_000], || format!("thresholds {thresholds:?}"))?;
    Ok(format!("thresholds {thresholds:?}"))
}

fn selection_backoff() -> Outcome {
    let cfg = config("codellaborator");
    let (mut s, _) = Session::open(&cfg, cfg.build_backend().map_err(|e| e.to_string())?, "value = compute(1)\n", 0).map_err(|e| e.to_string())?;
    let mut thresholds = Vec::new();
    let mut selected = 1_000;
    for (round, end) in [(1, 5), (2, 4)] {
        s.handle(ClientFrame::SelectionChange { range: Range::lines(0, 0, 0, end) }, selected);
        let mut fired = Vec::new();
        let mut t = selected;
        while fired.is_empty() && t < selected + 100_000 {
            t += 50;
            fired = started_at(&s.advance(t), TriggerKind::SelectionHold);
        }
        let at = *fired.first().ok_or_else(|| format!("selection hold never fired in round {round}"))?;
        thresholds.push(at - selected);
        selected = at + 70_000;
        s.advance(selected);
    }
    ensure(thresholds == [15_000, 30_000], || format!("thresholds {thresholds:?}"))?;
    Ok(format!("thresholds {thresholds:?}"))
}

#[derive(Deserialize)]
struct SuppressionCase {
    name: String,
    text: String,
    caret: Position,
    fires: bool,
}

#[derive(Deserialize)]
struct SuppressionFixture {
    cases: Vec<SuppressionCase>,
}

fn idle_suppression() -> Outcome {
    let raw = std::fs::read_to_string(fixture("idle_suppression.json")).map_err(|e| e.to_string())?;
    let fx: SuppressionFixture = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    let mut wrong = Vec::new();
    for case in &fx.cases {
        let doc = Document::new("case", &case.text);
        let mut engine = TriggerEngine::new(TriggerConfig::default());
        engine.start(0);
        engine
            .on_event(&EditorEvent::new(0, EventPayload::CaretMove { position: case.caret }), &doc, &doc)
            .map_err(|e| e.to_string())?;
        let fired = engine.tick(30_000, &doc).iter().any(|t| t.kind == TriggerKind::Idle);
        if fired != case.fires {
            wrong.push(case.name.clone());
        }
    }
    ensure(wrong.is_empty() && fx.cases.len() == 20, || format!("{} cases, mismatches {wrong:?}", fx.cases.len()))?;
    Ok(format!("{}/{} cases", fx.cases.len(), fx.cases.len()))
}

fn paste_kinds(pasted: &str) -> Result<Vec<TriggerKind>, String> {
    let before = Document::new("doc", "x = 1\n");
    let edit = TextEdit::insert(Position::new(1, 0), pasted, 0, Author::User);
    let after = apply_edit(&before, &edit).map_err(|e| e.to_string())?;
    let mut engine = TriggerEngine::new(TriggerConfig::default());
    engine.start(0);
    let triggers = engine
        .on_event_with_origin(&EditorEvent::new(100, EventPayload::Edit { edit }), Some(EditOrigin::Paste), &before, &after)
        .map_err(|e| e.to_string())?;
    Ok(triggers.into_iter().map(|t| t.kind).collect())
}

fn multi_line_threshold() -> Outcome {
    let one = paste_kinds("y = 2")?;
    let two = paste_kinds("y = 2\nz = 3")?;
    ensure(one.is_empty(), || format!("1-line paste raised {one:?}"))?;
    ensure(two == [TriggerKind::MultiLineChange], || format!("2-line paste raised {two:?}"))?;
    Ok("1 line: none, 2 lines: MultiLineChange".into())
}

fn prompt_only_ablation() -> Outcome {
    let r = replay_file(&fixture("traces/trace_b.jsonl"), &config("prompt_only")).map_err(|e| e.to_string())?;
    let s = &r.summary;
    let outside: u64 = TriggerKind::ALL
        .iter()
        .filter(|k| **k != TriggerKind::CommentNewline)
        .map(|k| s.kind(*k).admitted)
        .sum();
    ensure(outside == 0, || format!("{outside} admitted outside CommentNewline"))?;
    ensure(s.agent_edits == 0, || format!("{} agent edits", s.agent_edits))?;
    Ok(format!("admitted CommentNewline={}, other=0, edits=0", s.kind(TriggerKind::CommentNewline).admitted))
}

fn code_ghost_ablation() -> Outcome {
    let r = replay_file(&fixture("traces/trace_b.jsonl"), &config("code_ghost")).map_err(|e| e.to_string())?;
    let s = &r.summary;
    let proactive: u64 = TriggerKind::ALL.iter().map(|k| s.kind(*k).started).sum();
    ensure(proactive > 0, || "no proactive turns started".into())?;
    ensure(s.presence_patches == 0, || format!("{} presence patches", s.presence_patches))?;
    let breakouts = s.breakouts_created + s.messages_grouped;
    ensure(breakouts == 0, || format!("{breakouts} breakout records"))?;
    Ok(format!("proactive starts={proactive}, patches=0, breakouts=0"))
}

fn slow_turn() -> Arc<ScriptedBackend> {
    let edit = FixtureItem::Tool {
        tool: ToolInvocation { name: "insertCode".into(), arguments: json!({"afterLine": 0, "text": "y = 2"}) },
        delay_ms: 3_000,
    };
    scripted(vec![
        ("idle", vec![text("Looking at this line. ", 1_000), edit, text("Done.", 3_000)]),
        ("query", vec![text("NO_RESPONSE", 10)]),
    ])
}

fn cancellation() -> Outcome {
    let mut s = open(ConditionProfile::codellaborator(), slow_turn(), "x = 1\n");
    s.advance(30_500);
    ensure(s.is_turn_streaming(), || "turn not streaming".into())?;
    let mut out = s.handle(ClientFrame::UserMessage { text: "hold on".into(), scope: ChatScope::Global, compose_start_ms: None }, 30_500);
    out.extend(s.advance(60_000));
    let cancelled = frames(&out).any(|(_, f)| matches!(f, ServerFrame::TriggerDiagnostic { status: TurnStatus::Cancelled, .. }));
    ensure(cancelled, || "no cancellation diagnostic".into())?;
    let actions = agent_actions(&out);
    ensure(actions == 0, || format!("cancelled turn emitted {actions} actions"))?;

    let mut s = open(ConditionProfile::codellaborator(), slow_turn(), "x = 1\n");
    s.advance(30_500);
    let base_version = s.document().version();
    let mut out = s.handle(
        ClientFrame::Edit { base_version, range: Range::point(Position::new(1, 0)), text: "z".into(), origin: Some(EditOrigin::Typed) },
        30_500,
    );
    out.extend(s.advance(60_000));
    let msgs = agent_messages(&out);
    let edits = frames(&out).filter(|(_, f)| matches!(f, ServerFrame::AgentEditApplied { .. })).count();
    ensure(msgs.len() == 2 && edits > 0, || format!("edited turn delivered {msgs:?} and {edits} edits"))?;
    ensure(s.document().text().contains("y = 2"), || format!("agent code missing: {:?}", s.document().text()))?;
    Ok(format!("cancelled: 0 actions; concurrent edit: {} messages, {edits} edit steps", msgs.len()))
}

#[derive(Deserialize)]
struct OutdentCase {
    name: String,
    before: String,
    line: usize,
    column: usize,
    typed: String,
    expected: Option<CompletedBlock>,
}

#[derive(Deserialize)]
struct OutdentCorpus {
    cases: Vec<OutdentCase>,
}

fn outdent_oracle() -> Outcome {
    let raw = std::fs::read_to_string(fixture("outdent_corpus.json")).map_err(|e| e.to_string())?;
    let corpus: OutdentCorpus = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    let mut wrong = Vec::new();
    for case in &corpus.cases {
        let before = Document::new("case", &case.before);
        let at = Position::new(case.line, case.column);
        let after = apply_edit(&before, &TextEdit::insert(at, case.typed.as_str(), 0, Author::User)).map_err(|e| format!("{}: {e}", case.name))?;
        let caret = end_after_insert(at, &case.typed);
        let got = detect_outdent(&analyze(before.text(), 4), &analyze(after.text(), 4), caret);
        if got != case.expected {
            wrong.push(format!("{} (got {got:?})", case.name));
        }
    }
    ensure(wrong.is_empty() && corpus.cases.len() == 50, || format!("{} cases, mismatches {wrong:?}", corpus.cases.len()))?;
    Ok(format!("{}/{} cases", corpus.cases.len(), corpus.cases.len()))
}

fn random_document(rng: &mut ChaCha8Rng) -> Document {
    let lines = rng.random_range(1..8);
    let text: Vec<String> = (0..lines)
        .map(|i| {
            let indent = " ".repeat(4 * rng.random_range(0..3));
            format!("{indent}v{i} = {}", rng.random_range(0..1000))
        })
        .collect();
    Document::new("rand", &text.join("\n"))
}

fn random_position(rng: &mut ChaCha8Rng, doc: &Document) -> Position {
    let line = rng.random_range(0..doc.line_count());
    Position::new(line, rng.random_range(0..=doc.line_len(line).unwrap_or(0)))
}

fn random_range(rng: &mut ChaCha8Rng, doc: &Document) -> Range {
    let a = random_position(rng, doc);
    let b = random_position(rng, doc);
    if (a.line, a.column) <= (b.line, b.column) {
        Range { start: a, end: b }
    } else {
        Range { start: b, end: a }
    }
}

fn random_code(rng: &mut ChaCha8Rng) -> String {
    let lines = rng.random_range(0..4);
    (0..lines).map(|i| format!("w{i} = \"é{}\"", rng.random_range(0..50))).collect::<Vec<_>>().join("\n")
}

fn random_tool(rng: &mut ChaCha8Rng, doc: &Document) -> ToolCall {
    match rng.random_range(0..3) {
        0 => ToolCall::InsertCode { after_line: rng.random_range(-1..doc.line_count() as i64), text: random_code(rng) },
        1 => {
            let mut range = random_range(rng, doc);
            if range.is_empty() {
                range = Range { start: Position::new(0, 0), end: doc.end_position() };
            }
            if range.is_empty() {
                return ToolCall::InsertCode { after_line: 0, text: random_code(rng) };
            }
            ToolCall::DeleteCode { range }
        }
        _ => ToolCall::ReplaceCode { range: random_range(rng, doc), text: random_code(rng) },
    }
}

fn choreography_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..100 {
        let doc = random_document(&mut rng);
        let tool = random_tool(&mut rng, &doc);
        let rate = rng.random_range(1..12);
        let choreo = choreograph_with_rate(&tool, &doc, rate).map_err(|e| format!("call {i} {tool:?}: {e}"))?;
        let atomic = apply_edit(&doc, &choreo.atomic).map_err(|e| format!("call {i}: {e}"))?;
        let (played, _) = play(&choreo, &doc, &mut PresenceState::new(true));
        ensure(played.text().as_bytes() == atomic.text().as_bytes(), || format!("call {i} {tool:?} diverged"))?;
    }
    Ok("100/100 tool calls".into())
}

fn determinism() -> Outcome {
    let cfg = config("codellaborator");
    let path = fixture("traces/trace_c.jsonl");
    let a = replay_file(&path, &cfg).map_err(|e| e.to_string())?;
    let b = replay_file(&path, &cfg).map_err(|e| e.to_string())?;
    ensure(a.action_log() == b.action_log(), || "agent-action logs differ".into())?;
    ensure(a.to_jsonl() == b.to_jsonl(), || "output streams differ".into())?;
    let sa = serde_json::to_string(&a.summary).map_err(|e| e.to_string())?;
    let sb = serde_json::to_string(&b.summary).map_err(|e| e.to_string())?;
    ensure(sa == sb, || "summaries differ".into())?;
    ensure(!a.action_log().is_empty(), || "trace C produced no agent actions".into())?;
    Ok(format!("{} action lines identical", a.action_log().lines().count()))
}

fn episode_metrics() -> Outcome {
    let raw = std::fs::read_to_string(fixture("traces/trace_d.expected.json")).map_err(|e| e.to_string())?;
    let want: serde_json::Value = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    let r = replay_file(&fixture("traces/trace_d.jsonl"), &config("code_ghost")).map_err(|e| e.to_string())?;
    let got = serde_json::to_value(&r.summary).map_err(|e| e.to_string())?;
    ensure(got == want["summary"], || format!("summary {got}"))?;
    let episodes: Vec<(u64, Option<u64>)> = r.episodes().map(|e| (e.expression_ms, e.interpretation_ms)).collect();
    let expected: Vec<(u64, Option<u64>)> = want["episodes"]
        .as_array()
        .ok_or("fixture has no episodes")?
        .iter()
        .map(|e| (e["expressionMs"].as_u64().unwrap_or(u64::MAX), e["interpretationMs"].as_u64()))
        .collect();
    ensure(episodes == expected, || format!("episode timings {episodes:?}"))?;
    Ok(format!("{} episodes, mean expression {:?} ms, mean interpretation {:?} ms", episodes.len(), r.summary.mean_expression_ms, r.summary.mean_interpretation_ms))
}

fn message_cap_and_silence() -> Outcome {
    let five = "First point.\n\nSecond point.\n\nThird point.\n\nFourth point.\n\nFifth point.";
    let b = scripted(vec![("query", vec![text(five, 100)]), ("idle", vec![text("NO_RESPONSE", 100)])]);
    let mut s = open(ConditionProfile::codellaborator(), b, "x = 1\n");
    let mut out = s.handle(ClientFrame::UserMessage { text: "explain".into(), scope: ChatScope::Global, compose_start_ms: None }, 1_000);
    out.extend(s.advance(2_000));
    let msgs = agent_messages(&out);
    ensure(msgs.len() == 3, || format!("{} messages: {msgs:?}", msgs.len()))?;

    let out = s.advance(40_000);
    ensure(!started_at(&out, TriggerKind::Idle).is_empty(), || "idle turn did not run".into())?;
    let visible = agent_actions(&out);
    ensure(visible == 0, || format!("NO_RESPONSE produced {visible} visible actions"))?;
    Ok("5 paragraphs -> 3 messages; NO_RESPONSE -> nothing".into())
}

fn provenance_ttl() -> Outcome {
    let edit = FixtureItem::Tool {
        tool: ToolInvocation { name: "insertCode".into(), arguments: json!({"afterLine": 0, "text": "y = 2"}) },
        delay_ms: 0,
    };
    let mut s = open(ConditionProfile::codellaborator(), scripted(vec![("idle", vec![edit])]), "x = 1\n");
    let mut t = 30_000;
    let created = loop {
        s.advance(t);
        if let Some(h) = s.presence().highlights.first() {
            break h.created_at_ms;
        }
        ensure(t < 40_000, || "no highlight created".into())?;
        t += 50;
    };
    s.advance(created + 4_999);
    ensure(!s.presence().highlights.is_empty(), || "highlight expired early".into())?;
    let mut tick = created + 4_999;
    let cleared_at = loop {
        tick += 50;
        let out = s.advance(tick);
        let patch = frames(&out).find_map(|(at, f)| match f {
            ServerFrame::PresencePatch { presence } if presence.highlights.is_empty() => Some(at),
            _ => None,
        });
        if let Some(at) = patch {
            break at;
        }
        ensure(tick < created + 10_000, || "highlight never expired".into())?;
    };
    let lag = cleared_at - created;
    ensure((5_000..5_050).contains(&lag), || format!("cleared {lag} ms after creation"))?;
    Ok(format!("created at {created}, cleared at +{lag} ms"))
}

fn main() {
    let checks: [Check; 13] = [
        ("adaptive idle backoff", idle_backoff),
        ("selection backoff", selection_backoff),
        ("idle suppression", idle_suppression),
        ("multi-line threshold", multi_line_threshold),
        ("ablation: PromptOnly", prompt_only_ablation),
        ("ablation: CodeGhost", code_ghost_ablation),
        ("cancellation semantics", cancellation),
        ("outdent oracle", outdent_oracle),
        ("choreography equivalence", choreography_equivalence),
        ("determinism", determinism),
        ("episode metrics", episode_metrics),
        ("message cap and NO_RESPONSE", message_cap_and_silence),
        ("provenance TTL", provenance_ttl),
    ];
    let suite = Instant::now();
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let result = check();
        let ms = start.elapsed().as_secs_f64() * 1000.0;
        match result {
            Ok(detail) => println!("PASS  {name:<30} {detail} ({ms:.1} ms)"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<30} {why} ({ms:.1} ms)");
            }
        }
    }
    let total = suite.elapsed().as_secs_f64();
    println!("{} passed, {failed} failed in {total:.2} s", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
