//! Runs the session's Python file in a throwaway directory and evaluates the
//! bundled task suites against it.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const OUTPUT_CAP_BYTES: usize = 64 * 1024;
/// Exit code reported for a program killed at its timeout.
pub const TIMEOUT_EXIT_CODE: i32 = 124;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("python interpreter {0:?} not found")]
    InterpreterMissing(String),
    #[error("failed to start program: {0}")]
    SpawnFailure(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("malformed test suite for {task}: {message}")]
    BadSuite { task: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionResult {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub duration_ms: u64,
    pub truncated: bool,
    #[serde(default)]
    pub timed_out: bool,
}

impl ExecutionResult {
    pub fn failed(&self) -> bool {
        self.exit_code != 0
    }

    /// Console text as the user sees it.
    pub fn console(&self) -> String {
        format!("{}{}", self.stdout, self.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ExecConfig {
    pub interpreter: String,
    pub timeout_ms: u64,
    pub output_cap_bytes: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            interpreter: "python3".into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            output_cap_bytes: OUTPUT_CAP_BYTES,
        }
    }
}

const SANDBOX_WRAPPER: &str = r#"import runpy
import socket
import sys


def _blocked(*args, **kwargs):
    raise OSError("network access is disabled")


class _BlockedSocket(socket.socket):
    def __init__(self, *args, **kwargs):
        _blocked()


socket.socket = _BlockedSocket
socket.create_connection = _blocked
socket.getaddrinfo = _blocked
socket.socketpair = _blocked

sys.argv = ["main.py"]
runpy.run_path("main.py", run_name="__main__")
"#;

const TEST_RUNNER: &str = r#"import builtins
import json
import socket
import sys
import traceback


def _blocked(*args, **kwargs):
    raise OSError("network access is disabled")


socket.socket = _blocked
socket.create_connection = _blocked
socket.getaddrinfo = _blocked

MARK = "@@pairloop-test"

try:
    with open("words.txt") as f:
        _words = set(f.read().split())
except OSError:
    _words = set()
builtins.lookup_word = lambda w: isinstance(w, str) and w.lower() in _words

with open("tests.json") as f:
    tests = json.load(f)["tests"]
with open("main.py") as f:
    source = f.read()

load_error = None
try:
    compile(source, "main.py", "exec")
except SyntaxError as e:
    load_error = "SyntaxError: %s" % e

real_stdout = sys.stdout
for case in tests:
    name = case["name"]
    if load_error is not None:
        print(MARK, "FAIL", name, json.dumps(load_error), file=real_stdout, flush=True)
        continue
    ns = {"__name__": "solution"}
    try:
        exec(compile(source, "main.py", "exec"), ns)
        exec(compile(case["code"], name, "exec"), ns)
        print(MARK, "PASS", name, file=real_stdout, flush=True)
    except BaseException as e:
        detail = "".join(traceback.format_exception_only(type(e), e)).strip()
        print(MARK, "FAIL", name, json.dumps(detail), file=real_stdout, flush=True)
        if isinstance(e, KeyboardInterrupt):
            raise
"#;

fn read_capped(mut source: impl Read + Send + 'static, cap: usize) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        let mut truncated = false;
        loop {
            match source.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        (kept, truncated)
    })
}

fn lossy(bytes: Vec<u8>) -> String {
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
    }
}

/// Runs `script` (already written into `dir`) with the interpreter in
/// isolated mode, enforcing the timeout and output caps.
fn run_in(dir: &Path, script: &str, config: &ExecConfig) -> Result<ExecutionResult, ExecError> {
    let started = Instant::now();
    let mut child = Command::new(&config.interpreter)
        .arg("-I")
        .arg(script)
        .current_dir(dir)
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONIOENCODING", "utf-8")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ExecError::InterpreterMissing(config.interpreter.clone()),
            _ => ExecError::SpawnFailure(e.to_string()),
        })?;
    let out = read_capped(child.stdout.take().expect("piped stdout"), config.output_cap_bytes);
    let err = read_capped(child.stderr.take().expect("piped stderr"), config.output_cap_bytes);

    let deadline = started + Duration::from_millis(config.timeout_ms);
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            timed_out = true;
            break child.wait()?;
        }
        thread::sleep(Duration::from_millis(5));
    };
    let (stdout, out_trunc) = out.join().unwrap_or_default();
    let (stderr, err_trunc) = err.join().unwrap_or_default();
    let mut stderr = lossy(stderr);
    if timed_out {
        stderr.push_str(&format!("\n[timed out after {} ms]\n", config.timeout_ms));
    }
    Ok(ExecutionResult {
        stdout: lossy(stdout),
        stderr,
        exit_code: if timed_out { TIMEOUT_EXIT_CODE } else { status.code().unwrap_or(-1) },
        duration_ms: started.elapsed().as_millis() as u64,
        truncated: out_trunc || err_trunc,
        timed_out,
    })
}

/// Runs a single-file program in a fresh temporary directory with network
/// access disabled.
pub fn execute(source: &str, config: &ExecConfig) -> Result<ExecutionResult, ExecError> {
    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("main.py"), source)?;
    std::fs::write(dir.path().join("_pairloop_run.py"), SANDBOX_WRAPPER)?;
    run_in(dir.path(), "_pairloop_run.py", config)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Suite {
    tests: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub id: &'static str,
    pub description: &'static str,
    pub reference: &'static str,
    tests_json: &'static str,
    support: &'static [(&'static str, &'static str)],
}

impl TaskSpec {
    pub fn title(&self) -> &'static str {
        self.description.lines().next().unwrap_or(self.id).trim_start_matches("# ")
    }

    pub fn tests(&self) -> Result<Vec<TestCase>, ExecError> {
        serde_json::from_str::<Suite>(self.tests_json)
            .map(|s| s.tests)
            .map_err(|e| ExecError::BadSuite { task: self.id.into(), message: e.to_string() })
    }
}

static TASKS: [TaskSpec; 3] = [
    TaskSpec {
        id: "scheduler",
        description: include_str!("../tasks/scheduler/description.md"),
        reference: include_str!("../tasks/scheduler/reference.py"),
        tests_json: include_str!("../tasks/scheduler/tests.json"),
        support: &[],
    },
    TaskSpec {
        id: "word-game",
        description: include_str!("../tasks/word-game/description.md"),
        reference: include_str!("../tasks/word-game/reference.py"),
        tests_json: include_str!("../tasks/word-game/tests.json"),
        support: &[("words.txt", include_str!("../tasks/word-game/words.txt"))],
    },
    TaskSpec {
        id: "budget",
        description: include_str!("../tasks/budget/description.md"),
        reference: include_str!("../tasks/budget/reference.py"),
        tests_json: include_str!("../tasks/budget/tests.json"),
        support: &[],
    },
];

pub fn tasks() -> &'static [TaskSpec] {
    &TASKS
}

pub fn task(id: &str) -> Result<&'static TaskSpec, ExecError> {
    TASKS.iter().find(|t| t.id == id).ok_or_else(|| ExecError::UnknownTask(id.into()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub task: String,
    pub results: Vec<TestResult>,
}

impl TestReport {
    pub fn passed(&self) -> bool {
        !self.results.is_empty() && self.results.iter().all(|r| r.passed)
    }

    pub fn pass_count(&self) -> usize {
        self.results.iter().filter(|r| r.passed).count()
    }
}

/// Runs a task's unit tests against `source`. Results come back in suite
/// order; a test the runner never reported counts as failed.
pub fn run_tests(source: &str, task: &TaskSpec, config: &ExecConfig) -> Result<TestReport, ExecError> {
    let tests = task.tests()?;
    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("main.py"), source)?;
    std::fs::write(dir.path().join("tests.json"), task.tests_json)?;
    std::fs::write(dir.path().join("_pairloop_tests.py"), TEST_RUNNER)?;
    for (name, content) in task.support {
        std::fs::write(dir.path().join(name), content)?;
    }
    let run = run_in(dir.path(), "_pairloop_tests.py", config)?;

    let mut reported = std::collections::HashMap::new();
    for line in run.stdout.lines() {
        let Some(rest) = line.strip_prefix("@@pairloop-test ") else { continue };
        let mut parts = rest.splitn(3, ' ');
        let (Some(verdict), Some(name)) = (parts.next(), parts.next()) else { continue };
        let message = parts.next().map(|m| serde_json::from_str::<String>(m).unwrap_or_else(|_| m.to_owned()));
        reported.insert(name.to_owned(), (verdict == "PASS", message));
    }
    let fallback = if run.timed_out { "timed out" } else { "no result reported" };
    let results = tests
        .into_iter()
        .map(|t| match reported.remove(&t.name) {
            Some((passed, message)) => TestResult { name: t.name, passed, message },
            None => TestResult { name: t.name, passed: false, message: Some(fallback.into()) },
        })
        .collect();
    Ok(TestReport { task: task.id.into(), results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_and_errors() {
        let cfg = ExecConfig::default();
        let r = execute("print('hi')\n", &cfg).unwrap();
        assert_eq!(r.stdout, "hi\n");
        assert_eq!(r.exit_code, 0);
        let r = execute("1/0\n", &cfg).unwrap();
        assert!(r.stderr.contains("ZeroDivisionError"));
        assert!(r.failed());
    }

    #[test]
    fn network_is_blocked() {
        let r = execute("import socket\nsocket.create_connection(('example.com', 80))\n", &ExecConfig::default()).unwrap();
        assert!(r.stderr.contains("network access is disabled"));
    }

    #[test]
    fn output_is_capped() {
        let cfg = ExecConfig { output_cap_bytes: 100, ..Default::default() };
        let r = execute("print('x' * 1000)\n", &cfg).unwrap();
        assert_eq!(r.stdout.len(), 100);
        assert!(r.truncated);
    }

    #[test]
    fn timeout_kills_program() {
        let cfg = ExecConfig { timeout_ms: 300, ..Default::default() };
        let r = execute("while True:\n    pass\n", &cfg).unwrap();
        assert!(r.timed_out);
        assert_eq!(r.exit_code, TIMEOUT_EXIT_CODE);
    }

    #[test]
    fn missing_interpreter() {
        let cfg = ExecConfig { interpreter: "no-such-python-here".into(), ..Default::default() };
        assert!(matches!(execute("", &cfg), Err(ExecError::InterpreterMissing(_))));
    }

    #[test]
    fn references_pass_and_empty_file_fails() {
        let cfg = ExecConfig::default();
        for t in tasks() {
            let report = run_tests(t.reference, t, &cfg).unwrap();
            assert!(report.passed(), "{}: {:?}", t.id, report.results);
            let empty = run_tests("", t, &cfg).unwrap();
            assert_eq!(empty.pass_count(), 0, "{}", t.id);
        }
    }

    #[test]
    fn syntax_error_fails_every_test() {
        let t = task("budget").unwrap();
        let r = run_tests("def broken(:\n", t, &ExecConfig::default()).unwrap();
        assert!(r.results.iter().all(|r| !r.passed && r.message.as_deref().unwrap().contains("SyntaxError")));
    }
}
