//! Admission by profile, priority arbitration and episode classification.

use pairloop::document::{ChatScope, Position};
use pairloop::policy::{admit, classify_outcome, ConditionProfile, EpisodeView, ObservedEvent, ObservedKind, Policy, PolicyConfig, TaskSource, UserAction};
use pairloop::trigger::{ContextWindow, Trigger, TriggerContext, TriggerKind};

fn trigger(kind: TriggerKind) -> Trigger {
    Trigger {
        kind,
        fired_at_ms: 5_000,
        context: TriggerContext {
            caret: Position::new(0, 0),
            selection: None,
            window: ContextWindow { first_line: 0, lines: vec![] },
            console_tail: None,
            execution_failed: None,
            completed_block: None,
            enclosing_blocks: vec![],
            comment_line: None,
            edited_range: None,
        },
    }
}

fn main() {
    let candidates = [TriggerKind::Idle, TriggerKind::MultiLineChange, TriggerKind::CommentNewline];
    for profile in [ConditionProfile::prompt_only(), ConditionProfile::code_ghost(), ConditionProfile::codellaborator()] {
        let admitted: Vec<_> = candidates.iter().map(|k| trigger(*k)).filter(|t| admit(&profile, t)).collect();
        let policy = Policy::new(PolicyConfig::default());
        let arb = policy.arbitrate(admitted);
        println!(
            "{:?}: start {:?}, drop {:?}",
            profile.name,
            arb.start.map(|t| t.kind),
            arb.dropped.iter().map(|t| t.kind).collect::<Vec<_>>()
        );
    }

    let mut policy = Policy::new(PolicyConfig::default());
    policy.begin(TaskSource::Trigger { trigger: TriggerKind::Idle }, 30_000);
    println!("edit cancels {} task(s)", policy.on_user_action(UserAction::Edit).len());
    println!("chat message cancels {} task(s)", policy.on_user_action(UserAction::Message).len());

    let episode = EpisodeView { scope: ChatScope::Global, output_done_ms: 31_000, has_agent_edits: false, closed_at_ms: 91_000 };
    let replied = [ObservedEvent { at_ms: 40_000, kind: ObservedKind::UserMessage { scope: ChatScope::Global } }];
    println!("reply within the window: {:?}", classify_outcome(&episode, &replied, 60_000).classification);
    println!("silence: {:?}", classify_outcome(&episode, &[], 60_000).classification);
}
