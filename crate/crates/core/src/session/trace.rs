//! JSONL interaction traces: recording, validation, replay and summaries.
//!
//! A trace starts with a versioned header line, followed by client frames
//! (`in`), server frames (`out`), execution results fed back by the driver
//! (`sys`), closed episodes (`episode`) and an optional `end` marker.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecutionResult;
use crate::policy::{ConditionProfile, EpisodeClass};
use crate::trigger::TriggerKind;

use super::config::{ConfigError, SessionConfig};
use super::engine::{EpisodeRecord, Session, SessionOutput};
use super::wire::{ClientFrame, ServerEnvelope, ServerFrame, TurnKind, TurnStatus};

pub const TRACE_FORMAT: &str = "pairloop-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl TraceError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        TraceError::Malformed { line, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type")]
pub enum TraceLine {
    #[serde(rename_all = "camelCase")]
    Header {
        format: String,
        version: u32,
        session_id: String,
        profile: ConditionProfile,
        initial_text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task_id: Option<String>,
    },
    In {
        t: u64,
        frame: ClientFrame,
    },
    Out {
        seq: u64,
        t: u64,
        frame: ServerFrame,
    },
    #[serde(rename_all = "camelCase")]
    Sys {
        t: u64,
        execution_finished: ExecutionResult,
    },
    Episode {
        record: EpisodeRecord,
    },
    End {
        t: u64,
    },
}

impl TraceLine {
    pub fn header(session_id: &str, profile: &ConditionProfile, initial_text: &str, task_id: Option<String>) -> Self {
        TraceLine::Header {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            session_id: session_id.into(),
            profile: profile.clone(),
            initial_text: initial_text.into(),
            task_id,
        }
    }

    fn time(&self) -> Option<u64> {
        match self {
            TraceLine::In { t, .. } | TraceLine::Out { t, .. } | TraceLine::Sys { t, .. } | TraceLine::End { t } => Some(*t),
            _ => None,
        }
    }

    pub fn from_output(output: &SessionOutput) -> Self {
        match output {
            SessionOutput::Frame(env) => TraceLine::Out {
                seq: env.seq,
                t: env.t,
                frame: env.frame.clone(),
            },
            SessionOutput::Episode(record) => TraceLine::Episode { record: record.clone() },
        }
    }
}

/// Appends trace lines to any writer, one JSON object per line.
pub struct TraceRecorder<W: Write> {
    out: W,
}

impl<W: Write> TraceRecorder<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, line: &TraceLine) -> Result<(), TraceError> {
        let json = serde_json::to_string(line).map_err(|e| TraceError::Io(e.into()))?;
        writeln!(self.out, "{json}")?;
        Ok(())
    }

    pub fn input(&mut self, t: u64, frame: &ClientFrame) -> Result<(), TraceError> {
        self.write(&TraceLine::In { t, frame: frame.clone() })
    }

    pub fn outputs(&mut self, outputs: &[SessionOutput]) -> Result<(), TraceError> {
        for o in outputs {
            self.write(&TraceLine::from_output(o))?;
        }
        Ok(())
    }

    pub fn execution(&mut self, t: u64, result: &ExecutionResult) -> Result<(), TraceError> {
        self.write(&TraceLine::Sys { t, execution_finished: result.clone() })
    }

    pub fn end(&mut self, t: u64) -> Result<(), TraceError> {
        self.write(&TraceLine::End { t })?;
        self.out.flush()?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), TraceError> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses and checks a trace: header first, known line types only,
/// strictly increasing sequence numbers, non-decreasing timestamps and
/// nothing after `end`. Errors carry the 1-based line number.
pub fn parse_trace(text: &str) -> Result<Vec<TraceLine>, TraceError> {
    let mut lines = Vec::new();
    let mut last_seq = 0u64;
    let mut last_t = 0u64;
    let mut ended = false;
    let raw: Vec<&str> = text.split('\n').collect();
    for (idx, raw_line) in raw.iter().enumerate() {
        let n = idx + 1;
        let is_last = idx + 1 == raw.len();
        if raw_line.trim().is_empty() {
            if is_last {
                break;
            }
            return Err(TraceError::at(n, "blank line"));
        }
        if is_last {
            return Err(TraceError::at(n, "line is not newline-terminated (truncated trace?)"));
        }
        let line: TraceLine = serde_json::from_str(raw_line).map_err(|e| TraceError::at(n, e.to_string()))?;
        if ended {
            return Err(TraceError::at(n, "content after end line"));
        }
        match (&line, n) {
            (TraceLine::Header { format, version, .. }, 1) => {
                if format != TRACE_FORMAT {
                    return Err(TraceError::at(n, format!("unknown format {format:?}")));
                }
                if *version != TRACE_VERSION {
                    return Err(TraceError::at(n, format!("unsupported version {version}")));
                }
            }
            (TraceLine::Header { .. }, _) => return Err(TraceError::at(n, "header repeated")),
            (_, 1) => return Err(TraceError::at(n, "first line must be a header")),
            _ => {}
        }
        if let TraceLine::Out { seq, .. } = &line {
            if *seq <= last_seq {
                return Err(TraceError::at(n, format!("sequence number {seq} does not follow {last_seq}")));
            }
            last_seq = *seq;
        }
        if let Some(t) = line.time() {
            if t < last_t {
                return Err(TraceError::at(n, format!("timestamp {t} precedes {last_t}")));
            }
            last_t = t;
        }
        if matches!(line, TraceLine::End { .. }) {
            ended = true;
        }
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(TraceError::at(1, "empty trace, header expected"));
    }
    Ok(lines)
}

pub fn validate_trace(path: &Path) -> Result<usize, TraceError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_trace(&text)?.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub detected: u64,
    pub admitted: u64,
    pub started: u64,
    pub engaged: u64,
    pub ignored: u64,
    pub disrupted: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub engaged: u64,
    pub ignored: u64,
    pub disrupted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplaySummary {
    pub profile: String,
    pub counts_by_trigger_kind: BTreeMap<String, KindCounts>,
    pub counts_by_outcome: OutcomeCounts,
    pub episodes: u64,
    pub mean_expression_ms: Option<f64>,
    pub mean_interpretation_ms: Option<f64>,
    pub agent_messages: u64,
    pub agent_edits: u64,
    pub presence_patches: u64,
    pub breakouts_created: u64,
    pub messages_grouped: u64,
}

impl ReplaySummary {
    /// Aggregates a session's outputs.
    pub fn from_outputs(profile: &str, outputs: &[SessionOutput]) -> Self {
        let mut kinds: BTreeMap<String, KindCounts> = TriggerKind::ALL.iter().map(|k| (k.name().to_owned(), KindCounts::default())).collect();
        let mut s = ReplaySummary {
            profile: profile.into(),
            counts_by_trigger_kind: BTreeMap::new(),
            counts_by_outcome: OutcomeCounts::default(),
            episodes: 0,
            mean_expression_ms: None,
            mean_interpretation_ms: None,
            agent_messages: 0,
            agent_edits: 0,
            presence_patches: 0,
            breakouts_created: 0,
            messages_grouped: 0,
        };
        let mut expression = Vec::new();
        let mut interpretation = Vec::new();
        for o in outputs {
            match o {
                SessionOutput::Frame(env) => match &env.frame {
                    ServerFrame::TriggerDiagnostic { turn: TurnKind::Trigger, trigger: Some(kind), status, .. } => {
                        let c = kinds.get_mut(kind.name()).expect("all kinds present");
                        match status {
                            TurnStatus::NotAdmitted => c.detected += 1,
                            TurnStatus::Dropped => {
                                c.detected += 1;
                                c.admitted += 1;
                            }
                            TurnStatus::Started => {
                                c.detected += 1;
                                c.admitted += 1;
                                c.started += 1;
                            }
                            _ => {}
                        }
                    }
                    ServerFrame::AgentMessage { .. } => s.agent_messages += 1,
                    ServerFrame::AgentEditApplied { .. } => s.agent_edits += 1,
                    ServerFrame::PresencePatch { .. } => s.presence_patches += 1,
                    ServerFrame::BreakoutCreated { .. } => s.breakouts_created += 1,
                    ServerFrame::MessagesGrouped { .. } => s.messages_grouped += 1,
                    _ => {}
                },
                SessionOutput::Episode(ep) => {
                    s.episodes += 1;
                    let class = ep.outcome.classification;
                    match class {
                        EpisodeClass::Engaged => s.counts_by_outcome.engaged += 1,
                        EpisodeClass::Ignored => s.counts_by_outcome.ignored += 1,
                        EpisodeClass::Disrupted => s.counts_by_outcome.disrupted += 1,
                    }
                    if let Some(kind) = ep.trigger_kind {
                        let c = kinds.get_mut(kind.name()).expect("all kinds present");
                        match class {
                            EpisodeClass::Engaged => c.engaged += 1,
                            EpisodeClass::Ignored => c.ignored += 1,
                            EpisodeClass::Disrupted => c.disrupted += 1,
                        }
                    }
                    if ep.initiator == crate::document::Author::User {
                        expression.push(ep.expression_ms);
                    }
                    if let Some(i) = ep.interpretation_ms {
                        interpretation.push(i);
                    }
                }
            }
        }
        s.counts_by_trigger_kind = kinds;
        s.mean_expression_ms = mean(&expression);
        s.mean_interpretation_ms = mean(&interpretation);
        s
    }

    pub fn kind(&self, kind: TriggerKind) -> KindCounts {
        self.counts_by_trigger_kind.get(kind.name()).copied().unwrap_or_default()
    }

    pub fn admitted_total(&self) -> u64 {
        self.counts_by_trigger_kind.values().map(|c| c.admitted).sum()
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        md.push_str(&format!("# Replay summary ({})\n\n", self.profile));
        md.push_str("| Trigger | Detected | Admitted | Started | Engaged | Ignored | Disrupted |\n");
        md.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
        for kind in TriggerKind::ALL {
            let c = self.kind(kind);
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                kind.name(),
                c.detected,
                c.admitted,
                c.started,
                c.engaged,
                c.ignored,
                c.disrupted
            ));
        }
        let o = self.counts_by_outcome;
        md.push_str(&format!(
            "\nEpisodes: {} (engaged {}, ignored {}, disrupted {})\n\n",
            self.episodes, o.engaged, o.ignored, o.disrupted
        ));
        md.push_str(&format!("Mean expression time: {}\n", fmt_ms(self.mean_expression_ms)));
        md.push_str(&format!("Mean interpretation time: {}\n\n", fmt_ms(self.mean_interpretation_ms)));
        md.push_str(&format!(
            "Agent messages: {}, agent edits: {}, presence patches: {}, breakouts created: {}, message groups: {}\n",
            self.agent_messages, self.agent_edits, self.presence_patches, self.breakouts_created, self.messages_grouped
        ));
        md
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from("triggerKind,detected,admitted,started,engaged,ignored,disrupted\n");
        for kind in TriggerKind::ALL {
            let c = self.kind(kind);
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                kind.name(),
                c.detected,
                c.admitted,
                c.started,
                c.engaged,
                c.ignored,
                c.disrupted
            ));
        }
        let o = self.counts_by_outcome;
        csv.push_str(&format!("all,,,,{},{},{}\n", o.engaged, o.ignored, o.disrupted));
        csv
    }
}

fn mean(values: &[u64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<u64>() as f64 / values.len() as f64)
    }
}

fn fmt_ms(v: Option<f64>) -> String {
    match v {
        Some(ms) => format!("{ms:.1} ms"),
        None => "n/a".into(),
    }
}

#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub outputs: Vec<SessionOutput>,
    pub summary: ReplaySummary,
}

impl ReplayResult {
    /// The agent's messages, edits and groupings, one JSON object per line.
    pub fn action_log(&self) -> String {
        let mut log = String::new();
        for o in &self.outputs {
            if let SessionOutput::Frame(env) = o {
                if env.frame.is_agent_action() {
                    log.push_str(&serde_json::to_string(env).expect("frames serialize"));
                    log.push('\n');
                }
            }
        }
        log
    }

    /// Every output in trace form, without the header.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for o in &self.outputs {
            s.push_str(&serde_json::to_string(&TraceLine::from_output(o)).expect("lines serialize"));
            s.push('\n');
        }
        s
    }

    pub fn frames(&self) -> impl Iterator<Item = &ServerEnvelope> {
        self.outputs.iter().filter_map(|o| match o {
            SessionOutput::Frame(env) => Some(env),
            _ => None,
        })
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.outputs.iter().filter_map(|o| match o {
            SessionOutput::Episode(e) => Some(e),
            _ => None,
        })
    }
}

/// Re-runs the client side of a trace against a fresh session built from
/// `config`. Recorded server output is ignored; execution results come
/// from the trace's `sys` lines so no program is run.
pub fn replay(text: &str, config: &SessionConfig) -> Result<ReplayResult, TraceError> {
    let lines = parse_trace(text)?;
    let TraceLine::Header { initial_text, session_id, .. } = &lines[0] else {
        unreachable!("parse_trace checks the header");
    };
    let mut config = config.clone();
    config.session_id = session_id.clone();
    let profile = config.resolve_profile()?;
    let backend = config.build_backend()?;
    let (mut session, mut outputs) = Session::open(&config, backend, initial_text, 0)?;
    let mut ended = false;
    for line in &lines[1..] {
        match line {
            TraceLine::In { t, frame } => {
                outputs.extend(session.handle(frame.clone(), *t));
                session.take_execution_request();
            }
            TraceLine::Sys { t, execution_finished } => outputs.extend(session.execution_finished(execution_finished.clone(), *t)),
            TraceLine::End { t } => {
                outputs.extend(session.finish(*t));
                ended = true;
            }
            TraceLine::Header { .. } | TraceLine::Out { .. } | TraceLine::Episode { .. } => {}
        }
    }
    if !ended {
        outputs.extend(session.drain(100_000));
    }
    let summary = ReplaySummary::from_outputs(&format!("{:?}", profile.name), &outputs);
    Ok(ReplayResult { outputs, summary })
}

pub fn replay_file(path: &Path, config: &SessionConfig) -> Result<ReplayResult, TraceError> {
    let text = std::fs::read_to_string(path)?;
    replay(&text, config)
}
