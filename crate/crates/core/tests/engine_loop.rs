use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use cha_core::datapipe::{is_reference, DataPipe};
use cha_core::engine::{Engine, DEGRADED_PREFIX, EngineSettings, TurnRequest};
use cha_core::llm::{FixtureEntry, Matcher, ScriptedBackend, ScriptedFixture};
use cha_core::planner::Strategy;
use cha_core::session::Session;
use cha_core::task::{TaskError, TaskOutput, TaskRegistry, TaskSpec};
use cha_core::trace::{IterationOutcome, TurnStatus};
use cha_core::value::{Argument, Payload};
use serde_json::json;
use uuid::Uuid;

const SECRET: &str = "RAW-PAYLOAD-7f3a";
const STAGE1: &str = "suggest three creative strategies";
const STAGE2: &str = "skilled Python programmer";
const THINKER: &str = "===========Thinker:";

fn spec(name: &str, chat: &str, output_type: bool) -> TaskSpec {
    TaskSpec {
        name: name.into(),
        chat_name: chat.into(),
        description: format!("{name} task"),
        dependencies: vec![],
        inputs: vec!["input".into()],
        outputs: vec!["output".into()],
        output_type,
    }
}

fn registry(fetch_calls: Arc<AtomicUsize>) -> TaskRegistry {
    let mut r = TaskRegistry::new();
    r.register(
        spec("fetch_raw", "FetchRaw", true),
        Arc::new(move |_: &[Argument]| {
            fetch_calls.fetch_add(1, Ordering::SeqCst);
            Ok(TaskOutput::new(json!({"samples": [1, 2, 3], "tag": SECRET})))
        }),
    )
    .unwrap();
    r.register(
        spec("summarize", "Summarize", false),
        Arc::new(|args: &[Argument]| match &args[0] {
            Argument::Payload(Payload::Value(v)) => {
                let n = v["samples"].as_array().map_or(0, Vec::len);
                Ok(TaskOutput::new(json!({"count": n})))
            }
            _ => Err(TaskError::invalid_input("expected stored data")),
        }),
    )
    .unwrap();
    r.register(
        spec("lookup", "Lookup", false),
        Arc::new(|_: &[Argument]| Err(TaskError::new("NoResults", "nothing matched"))),
    )
    .unwrap();
    r
}

fn entry(substring: &str, response: &str) -> FixtureEntry {
    FixtureEntry {
        matcher: Matcher::PromptSubstring(substring.into()),
        response: response.into(),
    }
}

const DECISION: &str = "Strategy 1 ...\nDecision:\nFetch the raw data, then summarize it.";
const PLAN: &str = "```python\nraw = self.execute_task('fetch_raw', ['x'])\nsummary = self.execute_task('summarize', [raw])\n```";

fn engine(fixture: Vec<FixtureEntry>, settings: EngineSettings) -> (Engine, Arc<ScriptedBackend>, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let backend = Arc::new(ScriptedBackend::new(ScriptedFixture::new(fixture).unwrap()));
    let engine = Engine::new(
        Arc::new(registry(calls.clone())),
        Arc::new(DataPipe::seeded(1)),
        backend.clone(),
    )
    .with_settings(settings)
    .unwrap();
    (engine, backend, calls)
}

fn stage1_count(backend: &ScriptedBackend) -> usize {
    backend.exchanges().iter().filter(|e| e.prompt.contains(STAGE1)).count()
}

#[test]
fn never_finishing_planner_is_bounded() {
    for max in 1..=5 {
        let fixture = vec![
            entry(THINKER, "Here is what I found."),
            entry(STAGE2, PLAN),
            entry(STAGE1, DECISION),
        ];
        let settings = EngineSettings { max_iterations: max, ..Default::default() };
        let (engine, backend, calls) = engine(fixture, settings);
        let mut session = Session::new(Uuid::nil());
        let out = engine.orchestrate_turn(&mut session, &TurnRequest::new("Summarize my data")).unwrap();
        assert!(stage1_count(&backend) <= max + 1);
        assert_eq!(out.trace.planner_turns(), max);
        assert_eq!(calls.load(Ordering::SeqCst), max);
        assert_eq!(out.answer, "Here is what I found.");
    }
}

#[test]
fn output_type_payload_never_reaches_a_prompt() {
    let fixture = vec![
        entry(THINKER, "Done."),
        entry("PreviousActions: ------------------", "Final Answer: the summary has a count of 3"),
        entry(STAGE2, PLAN),
        entry(STAGE1, DECISION),
    ];
    let (engine, backend, _) = engine(fixture, EngineSettings::default());
    let mut session = Session::new(Uuid::nil());
    let out = engine.orchestrate_turn(&mut session, &TurnRequest::new("Summarize my data")).unwrap();
    assert_eq!(out.trace.planner_turns(), 2);
    let records: Vec<_> = out.trace.records().collect();
    assert!(is_reference(&records[0].rendered_output));
    assert_eq!(records[1].rendered_output, "{'count': 3}");
    let exchanges = backend.exchanges();
    assert_eq!(exchanges.len(), 4);
    for e in &exchanges {
        assert!(!e.prompt.contains(SECRET), "payload leaked into:\n{}", e.prompt);
    }
    for p in out.trace.prompts() {
        assert!(!p.contains(SECRET));
    }
    assert_eq!(out.tasks_used, ["FetchRaw", "Summarize"]);
}

#[test]
fn failing_step_feeds_the_error_to_the_next_planning_round() {
    let fixture = vec![
        entry(THINKER, "I could not find it."),
        entry("FAILED: NoResults", "Final Answer: the lookup found nothing"),
        entry(STAGE2, "```python\nr = self.execute_task('lookup', ['q'])\n```"),
        entry(STAGE1, "Decision: look it up"),
    ];
    let (engine, backend, _) = engine(fixture, EngineSettings::default());
    let mut session = Session::new(Uuid::nil());
    let out = engine.orchestrate_turn(&mut session, &TurnRequest::new("Find q")).unwrap();
    assert_eq!(out.trace.planner_turns(), 2);
    assert!(out.trace.iterations[0].error.as_deref().unwrap().contains("NoResults"));
    let stage1: Vec<_> = backend
        .exchanges()
        .into_iter()
        .filter(|e| e.prompt.contains(STAGE1))
        .collect();
    assert_eq!(stage1.len(), 2);
    assert!(!stage1[0].prompt.contains("FAILED"));
    assert!(stage1[1].prompt.contains("lookup: ['q']\nFAILED: NoResults: nothing matched"));
    assert_eq!(out.trace.iterations[1].outcome, IterationOutcome::Finished);
}

#[test]
fn malformed_code_is_repaired_once() {
    let fixture = vec![
        entry(THINKER, "ok"),
        entry("PreviousActions: ------------------", "Final Answer: done"),
        entry("could not be executed", PLAN),
        entry(STAGE2, "```python\nraw = fetch_raw('x')\n```"),
        entry(STAGE1, DECISION),
    ];
    let (engine, backend, calls) = engine(fixture, EngineSettings::default());
    let mut session = Session::new(Uuid::nil());
    let out = engine.orchestrate_turn(&mut session, &TurnRequest::new("Summarize my data")).unwrap();
    let stages: Vec<&str> = out.trace.iterations[0].exchanges.iter().map(|e| e.stage.as_str()).collect();
    assert_eq!(stages, ["stage1", "stage2", "repair"]);
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    assert_eq!(backend.calls(), 5);
    assert_eq!(out.trace.status, TurnStatus::Answered);
}

#[test]
fn unrepairable_code_degrades_to_an_apology() {
    let fixture = vec![
        entry(THINKER, "Sorry, I could not plan that."),
        entry("could not be executed", "still not code"),
        entry(STAGE2, "nothing useful"),
        entry(STAGE1, DECISION),
    ];
    let (engine, backend, calls) = engine(fixture, EngineSettings::default());
    let mut session = Session::new(Uuid::nil());
    let out = engine.orchestrate_turn(&mut session, &TurnRequest::new("Summarize my data")).unwrap();
    assert_eq!(out.trace.status, TurnStatus::Degraded);
    assert_eq!(calls.load(Ordering::SeqCst), 0);
    assert_eq!(backend.calls(), 4);
    let thinker = out.trace.thinker.unwrap();
    assert!(thinker.prompt.contains(&format!("System: {DEGRADED_PREFIX}")));
}

#[test]
fn react_strategy_runs_one_action_per_reply() {
    // The engine pipe is seeded with 1, so its first key is predictable.
    let key = DataPipe::seeded(1).store(Payload::Value(json!(null)), "probe").unwrap();
    let second = format!("Thought: summarize\nAction: summarize\nAction Input: ['{key}']");
    let fixture = vec![
        entry(THINKER, "Three samples."),
        entry("Observation: {'count': 3}", "Thought: I have enough information\nFinal Answer: three samples"),
        entry("Observation: datapipe:", &second),
        entry("Question: Summarize", "Thought: fetch first\nAction: fetch_raw\nAction Input: ['x']"),
    ];
    let settings = EngineSettings { strategy: Strategy::React, max_iterations: 5, ..Default::default() };
    let (engine, _backend, _) = engine(fixture, settings);
    let mut session = Session::new(Uuid::nil());
    let out = engine.orchestrate_turn(&mut session, &TurnRequest::new("Summarize my data")).unwrap();
    let outcomes: Vec<_> = out.trace.iterations.iter().map(|i| i.outcome.clone()).collect();
    assert_eq!(outcomes.last(), Some(&IterationOutcome::Finished));
    assert_eq!(out.answer, "Three samples.");
    assert_eq!(out.tasks_used, ["FetchRaw", "Summarize"]);
    assert_eq!(out.trace.planner_turns(), 3);
}

#[test]
fn explainability_lists_previous_tasks_without_the_model() {
    let fixture = vec![
        entry(THINKER, "Done."),
        entry("PreviousActions: ------------------", "Final Answer: done"),
        entry(STAGE2, PLAN),
        entry(STAGE1, DECISION),
    ];
    let (engine, backend, _) = engine(fixture, EngineSettings::default());
    let mut session = Session::new(Uuid::nil());
    engine.orchestrate_turn(&mut session, &TurnRequest::new("Summarize my data")).unwrap();
    let before = backend.calls();
    let out = engine.orchestrate_turn(&mut session, &TurnRequest::new("Name the tasks used")).unwrap();
    assert_eq!(backend.calls(), before);
    assert_eq!(out.trace.status, TurnStatus::Explained);
    assert!(out.answer.contains("FetchRaw, Summarize"));
    assert_eq!(session.history.len(), 2);
}
