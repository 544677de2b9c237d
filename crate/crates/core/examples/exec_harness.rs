//! Runs code in the sandboxed interpreter and grades a task's reference
//! solution against its tests. Needs `python3` on PATH.

use pairloop::exec::{execute, run_tests, task, ExecConfig};

fn main() {
    let config = ExecConfig { timeout_ms: 2_000, ..ExecConfig::default() };
    match execute("print(sum(range(10)))\nraise ValueError('boom')\n", &config) {
        Ok(r) => println!("exit {} in {} ms\n{}", r.exit_code, r.duration_ms, r.console()),
        Err(e) => {
            eprintln!("cannot execute: {e}");
            return;
        }
    }
    match execute("while True: pass\n", &config) {
        Ok(r) => println!("runaway loop: timed_out={} exit {}", r.timed_out, r.exit_code),
        Err(e) => eprintln!("cannot execute: {e}"),
    }

    let budget = task("budget").expect("bundled task");
    match run_tests(budget.reference, budget, &config) {
        Ok(report) => println!("{}: {}/{} tests pass", report.task, report.pass_count(), report.results.len()),
        Err(e) => eprintln!("cannot run tests: {e}"),
    }
}
