//! Session lifecycle, wire protocol, configuration, traces and the TCP
//! server.

pub mod config;
pub mod engine;
pub mod server;
pub mod trace;
pub mod wire;

pub use config::{BackendConfig, ConfigError, SessionConfig, TimerSettings, TypingRate};
pub use engine::{EpisodeRecord, ExecutionRequest, Session, SessionOutput};
pub use trace::{parse_trace, replay, replay_file, validate_trace, KindCounts, OutcomeCounts, ReplayResult, ReplaySummary, TraceError, TraceLine, TraceRecorder};
pub use wire::{ClientFrame, ErrorCode, ServerEnvelope, ServerFrame, TurnKind, TurnStatus};
