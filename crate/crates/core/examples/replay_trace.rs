//! Replays a bundled trace under each profile and prints the summaries.
//!
//! ```text
//! cargo run --example replay_trace -- fixtures/traces/trace_b.jsonl
//! ```

use std::path::{Path, PathBuf};

use pairloop::session::{replay_file, SessionConfig};

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let trace = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| root.join("traces/trace_b.jsonl"));
    for profile in ["prompt_only", "code_ghost", "codellaborator"] {
        let config = SessionConfig::load(&root.join(format!("configs/{profile}.json"))).expect("bundled config");
        let result = match replay_file(&trace, &config) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{}: {e}", trace.display());
                std::process::exit(1);
            }
        };
        println!("{}", result.summary.to_markdown());
    }
}
