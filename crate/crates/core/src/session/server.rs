//! TCP transport: newline-delimited JSON frames, one session per
//! connection. The first client frame must be `openSession`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use thiserror::Error;

use crate::agent::Backend;
use crate::exec::{execute, ExecConfig, ExecutionResult};

use super::config::{ConfigError, SessionConfig};
use super::engine::{Session, SessionOutput};
use super::trace::{TraceError, TraceLine, TraceRecorder};
use super::wire::{ClientFrame, ErrorCode, ServerEnvelope, ServerFrame};

const POLL_MS: u64 = 20;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot listen on port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("connection failed: {0}")]
    Io(#[from] std::io::Error),
}

enum Input {
    Line(String),
    Closed,
    ExecDone(ExecutionResult),
}

/// Binds `127.0.0.1:port` and serves sessions until the process exits.
pub fn serve(config: SessionConfig, port: u16) -> Result<(), ServerError> {
    let backend = config.build_backend()?;
    let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|source| ServerError::Bind { port, source })?;
    info!("listening on {}", listener.local_addr()?);
    serve_listener(listener, config, backend, None)
}

/// Accepts connections on `listener`, each on its own thread. With
/// `max_sessions` set, returns after that many sessions have ended.
pub fn serve_listener(
    listener: TcpListener,
    config: SessionConfig,
    backend: Arc<dyn Backend>,
    max_sessions: Option<usize>,
) -> Result<(), ServerError> {
    let mut handles = Vec::new();
    for (n, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let mut session_config = config.clone();
        session_config.session_id = format!("{}-{}", config.session_id, n + 1);
        session_config.trace_path = config.trace_path.as_deref().map(|p| trace_path_for(p, &session_config.session_id, n + 1));
        let backend = Arc::clone(&backend);
        handles.push(thread::spawn(move || {
            if let Err(e) = run_connection(stream, &session_config, backend) {
                warn!("session {} ended with error: {e}", session_config.session_id);
            }
        }));
        if max_sessions.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

/// Where a connection's trace goes: inside the configured directory, at
/// the configured file for the first session, or beside it for later ones.
pub fn trace_path_for(base: &Path, session_id: &str, n: usize) -> PathBuf {
    if base.is_dir() {
        return base.join(format!("{session_id}.jsonl"));
    }
    if n == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-{n}.{ext}"),
        None => format!("{stem}-{n}"),
    };
    base.with_file_name(name)
}

fn write_frame(out: &mut impl Write, env: &ServerEnvelope) -> std::io::Result<()> {
    let json = serde_json::to_string(env).map_err(std::io::Error::other)?;
    writeln!(out, "{json}")?;
    out.flush()
}

fn run_exec(source: String, config: ExecConfig, tx: mpsc::Sender<Input>) {
    thread::spawn(move || {
        let result = execute(&source, &config).unwrap_or_else(|e| ExecutionResult {
            stdout: String::new(),
            stderr: e.to_string(),
            exit_code: -1,
            duration_ms: 0,
            truncated: false,
            timed_out: false,
        });
        let _ = tx.send(Input::ExecDone(result));
    });
}

/// Runs one session over a connected socket until the client disconnects.
pub fn run_connection(stream: TcpStream, config: &SessionConfig, backend: Arc<dyn Backend>) -> Result<(), ServerError> {
    let start = Instant::now();
    let now = || start.elapsed().as_millis() as u64;
    let mut writer = BufWriter::new(stream.try_clone()?);
    let (tx, rx) = mpsc::channel();
    let reader_tx = tx.clone();
    thread::spawn(move || {
        for line in BufReader::new(stream).lines() {
            match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => {
                    if reader_tx.send(Input::Line(l)).is_err() {
                        return;
                    }
                }
                Err(_) => break,
            }
        }
        let _ = reader_tx.send(Input::Closed);
    });

    let (initial_text, task_id) = loop {
        match rx.recv() {
            Ok(Input::Line(l)) => match serde_json::from_str::<ClientFrame>(&l) {
                Ok(ClientFrame::OpenSession { initial_text, task_id }) => break (initial_text.unwrap_or_default(), task_id),
                Ok(other) => {
                    let msg = format!("expected openSession, got {}", other.type_name());
                    write_frame(&mut writer, &ServerEnvelope { seq: 0, t: now(), frame: ServerFrame::error(ErrorCode::Protocol, msg) })?;
                }
                Err(e) => {
                    write_frame(&mut writer, &ServerEnvelope { seq: 0, t: now(), frame: ServerFrame::error(ErrorCode::Protocol, e.to_string()) })?;
                }
            },
            _ => return Ok(()),
        }
    };

    let mut recorder = match &config.trace_path {
        Some(path) => Some(TraceRecorder::new(BufWriter::new(File::create(path)?))),
        None => None,
    };
    let (mut session, opened) = Session::open(config, backend, &initial_text, now())?;
    if let Some(rec) = &mut recorder {
        let task = task_id.or_else(|| config.task_id.clone());
        rec.write(&TraceLine::header(&config.session_id, session.profile(), &initial_text, task))?;
    }
    info!("session {} opened", config.session_id);

    let mut emit = |outs: Vec<SessionOutput>, recorder: &mut Option<TraceRecorder<BufWriter<File>>>| -> Result<(), ServerError> {
        for o in &outs {
            if let SessionOutput::Frame(env) = o {
                write_frame(&mut writer, env)?;
            }
        }
        if let Some(rec) = recorder {
            rec.outputs(&outs)?;
            rec.flush()?;
        }
        Ok(())
    };
    emit(opened, &mut recorder)?;

    loop {
        let wait = session
            .next_deadline()
            .map(|d| d.saturating_sub(now()))
            .unwrap_or(POLL_MS)
            .min(POLL_MS);
        let outs = match rx.recv_timeout(Duration::from_millis(wait)) {
            Ok(Input::Line(l)) => {
                let t = now().max(session.clock());
                match serde_json::from_str::<ClientFrame>(&l) {
                    Ok(frame) => {
                        emit(session.advance(t), &mut recorder)?;
                        if let Some(rec) = &mut recorder {
                            rec.input(t, &frame)?;
                        }
                        session.handle(frame, t)
                    }
                    Err(e) => session.reject(format!("malformed frame: {e}"), t),
                }
            }
            Ok(Input::ExecDone(result)) => {
                let t = now().max(session.clock());
                emit(session.advance(t), &mut recorder)?;
                if let Some(rec) = &mut recorder {
                    rec.execution(t, &result)?;
                }
                session.execution_finished(result, t)
            }
            Ok(Input::Closed) | Err(RecvTimeoutError::Disconnected) => {
                let t = now().max(session.clock());
                let outs = session.finish(t);
                let _ = emit(outs, &mut recorder);
                if let Some(rec) = &mut recorder {
                    rec.end(t)?;
                }
                info!("session {} closed", config.session_id);
                return Ok(());
            }
            Err(RecvTimeoutError::Timeout) => session.advance(now().max(session.clock())),
        };
        if let Some(req) = session.take_execution_request() {
            run_exec(req.source, config.exec.clone(), tx.clone());
        }
        emit(outs, &mut recorder)?;
    }
}
