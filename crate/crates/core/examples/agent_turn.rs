//! Builds a prompt for an idle intervention and runs it against a scripted
//! backend.

use pairloop::agent::backend::FixtureItem;
use pairloop::agent::{build_prompt, fingerprint, run_turn, MessageType, PromptInput, ScriptedBackend, ToolInvocation, TurnEnv};
use pairloop::context::ContextStore;
use pairloop::document::{ChatScope, Document, Position};
use pairloop::policy::{CancelToken, ConditionProfile};
use serde_json::json;

fn main() {
    let doc = Document::new("main.py", "def mean(xs):\n    return sum(xs) / len(xs)\n");
    let profile = ConditionProfile::codellaborator();
    let bundle = build_prompt(MessageType::Idle, &PromptInput::new(&doc, Position::new(1, 4)), &profile);
    println!("prompt fingerprint {}", fingerprint(&bundle));
    println!("--- user content ---\n{}\n---", bundle.render_user_content());

    let mut backend = ScriptedBackend::default();
    backend.insert(
        ScriptedBackend::fallback_key("idle"),
        vec![
            FixtureItem::Text { text: "An empty list divides by zero.\n\nHere is a guard.".into(), delay_ms: 0 },
            FixtureItem::Tool {
                tool: ToolInvocation { name: "insertCode".into(), arguments: json!({"afterLine": 0, "text": "    if not xs:\n        return 0.0"}) },
                delay_ms: 0,
            },
        ],
    );
    let store = ContextStore::new(true);
    let env = TurnEnv { doc: &doc, store: &store, can_edit: true, can_group: true, scope: &ChatScope::Global };
    let out = run_turn(&bundle, &backend, &CancelToken::new(), &env).expect("scripted turn");
    for action in &out.actions {
        println!("{}", serde_json::to_string(action).unwrap());
    }
    for d in &out.diagnostics {
        println!("diagnostic: {d}");
    }
}
