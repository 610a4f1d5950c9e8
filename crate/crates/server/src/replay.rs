//! Deterministic replay of recorded conversations against a scripted
//! backend, reporting the first place a new run departs from the golden
//! transcript.

use std::fmt;
use std::path::{Path, PathBuf};

use cha_core::engine::{EngineSettings, TurnRequest, TurnResult};
use cha_core::plan::render_step;
use cha_core::session::Session;
use cha_core::translation::LanguageTag;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::config::{BackendConfig, ConfigError, EngineConfig};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("fixture error: {0}")]
    FixtureError(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePrompt {
    pub stage: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptIteration {
    pub prompts: Vec<StagePrompt>,
    /// Canonical rendering of each plan step.
    pub plan: Vec<String>,
    /// Action blocks as shown to the planner.
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub query: String,
    #[serde(default)]
    pub language: Option<String>,
    pub iterations: Vec<TranscriptIteration>,
    pub thinker_prompt: Option<String>,
    pub answer: String,
    pub tasks_used: Vec<String>,
}

/// A recorded conversation plus what is needed to rebuild its engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub datapipe_seed: u64,
    pub tasks: Vec<String>,
    pub settings: EngineSettings,
    pub turns: Vec<TranscriptTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// One-based.
    pub turn: usize,
    /// One-based, absent for turn-level fields.
    pub iteration: Option<usize>,
    /// What differs, e.g. `plan step 1` or `answer`.
    pub field: String,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "turn {}", self.turn)?;
        if let Some(i) = self.iteration {
            write!(f, ", iteration {i}")?;
        }
        write!(
            f,
            ", {}:\n  expected: {:?}\n  actual:   {:?}",
            self.field, self.expected, self.actual
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub turns: usize,
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.divergence.is_none()
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.divergence {
            None => write!(f, "PASS ({} turns)", self.turns),
            Some(d) => write!(f, "FAIL at {d}"),
        }
    }
}

fn turn_record(request: &TurnRequest, result: &TurnResult) -> TranscriptTurn {
    TranscriptTurn {
        query: request.query.clone(),
        language: request.language.as_ref().map(|l| l.code().to_string()),
        iterations: result
            .trace
            .iterations
            .iter()
            .map(|it| TranscriptIteration {
                prompts: it
                    .exchanges
                    .iter()
                    .map(|e| StagePrompt {
                        stage: e.stage.clone(),
                        prompt: e.prompt.clone(),
                    })
                    .collect(),
                plan: it.plan_steps.iter().map(render_step).collect(),
                actions: it.records.iter().map(|r| r.render()).collect(),
            })
            .collect(),
        thinker_prompt: result.trace.thinker.as_ref().map(|e| e.prompt.clone()),
        answer: result.answer.clone(),
        tasks_used: result.tasks_used.clone(),
    }
}

fn engine_config(
    base: &EngineConfig,
    fixture: &Path,
    seed: u64,
    tasks: &[String],
    settings: &EngineSettings,
) -> Result<EngineConfig, ReplayError> {
    if !fixture.is_file() {
        return Err(ReplayError::FixtureError(format!(
            "fixture {} does not exist",
            fixture.display()
        )));
    }
    let mut config = base.clone();
    config.backend = BackendConfig::Scripted {
        fixture: PathBuf::from(fixture),
        responder_fixture: None,
    };
    config.datapipe_seed = Some(seed);
    config.tasks = tasks.to_vec();
    config.strategy = settings.strategy;
    config.max_iterations = settings.max_iterations;
    config.lang_mode = settings.lang_mode;
    config.response_prefix = settings.response_prefix.clone();
    config.planner = settings.planner_params.clone();
    config.responder = settings.responder_params.clone();
    config.server.state_dir = None;
    Ok(config)
}

fn run_turns(config: &EngineConfig, requests: &[TurnRequest]) -> Result<Vec<TranscriptTurn>, ReplayError> {
    let engine = config.build_engine()?;
    let mut session = Session::new(Uuid::nil());
    requests
        .iter()
        .map(|req| {
            let result = engine
                .orchestrate_turn(&mut session, req)
                .map_err(|e| ReplayError::FixtureError(format!("turn failed: {e}")))?;
            Ok(turn_record(req, &result))
        })
        .collect()
}

/// Runs `requests` against `fixture` and captures a transcript.
pub fn record(
    base: &EngineConfig,
    fixture: &Path,
    seed: u64,
    tasks: &[String],
    settings: &EngineSettings,
    requests: &[TurnRequest],
) -> Result<Transcript, ReplayError> {
    let config = engine_config(base, fixture, seed, tasks, settings)?;
    Ok(Transcript {
        datapipe_seed: seed,
        tasks: tasks.to_vec(),
        settings: settings.clone(),
        turns: run_turns(&config, requests)?,
    })
}

pub fn load_transcript(path: &Path) -> Result<Transcript, ReplayError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ReplayError::FixtureError(format!("cannot read transcript {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        ReplayError::FixtureError(format!("bad transcript {}: {e}", path.display()))
    })
}

/// Replays the queries of the golden transcript at `golden` with `fixture`
/// as the model and compares the new run against it.
pub fn replay(base: &EngineConfig, fixture: &Path, golden: &Path) -> Result<ReplayReport, ReplayError> {
    let expected = load_transcript(golden)?;
    let requests = expected
        .turns
        .iter()
        .map(|t| {
            let language = t
                .language
                .as_deref()
                .map(LanguageTag::parse)
                .transpose()
                .map_err(|e| ReplayError::FixtureError(e.to_string()))?;
            Ok(TurnRequest {
                query: t.query.clone(),
                metadata: vec![],
                language,
            })
        })
        .collect::<Result<Vec<_>, ReplayError>>()?;
    let config = engine_config(
        base,
        fixture,
        expected.datapipe_seed,
        &expected.tasks,
        &expected.settings,
    )?;
    let actual = run_turns(&config, &requests)?;
    Ok(ReplayReport {
        turns: expected.turns.len(),
        divergence: first_divergence(&expected.turns, &actual),
    })
}

fn differ(turn: usize, iteration: Option<usize>, field: impl Into<String>, e: &str, a: &str) -> Option<Divergence> {
    (e != a).then(|| Divergence {
        turn,
        iteration,
        field: field.into(),
        expected: e.to_string(),
        actual: a.to_string(),
    })
}

fn missing(opt: Option<&String>) -> &str {
    opt.map_or("<none>", String::as_str)
}

/// Compares iteration by iteration: prompts, then plan steps, then action
/// blocks; after that the thinker prompt, answer and tasks used.
pub fn first_divergence(expected: &[TranscriptTurn], actual: &[TranscriptTurn]) -> Option<Divergence> {
    for (t, (e, a)) in expected.iter().zip(actual).enumerate() {
        let turn = t + 1;
        for (i, (ei, ai)) in e.iterations.iter().zip(&a.iterations).enumerate() {
            let it = Some(i + 1);
            for (p, (ep, ap)) in ei.prompts.iter().zip(&ai.prompts).enumerate() {
                let field = format!("prompt {} ({})", p + 1, ep.stage);
                if let Some(d) = differ(turn, it, field.clone(), &ep.stage, &ap.stage)
                    .or_else(|| differ(turn, it, field, &ep.prompt, &ap.prompt))
                {
                    return Some(d);
                }
            }
            if ei.prompts.len() != ai.prompts.len() {
                return differ(turn, it, "prompt count", &ei.prompts.len().to_string(), &ai.prompts.len().to_string());
            }
            let steps = ei.plan.len().max(ai.plan.len());
            for s in 0..steps {
                if let Some(d) = differ(
                    turn,
                    it,
                    format!("plan step {}", s + 1),
                    missing(ei.plan.get(s)),
                    missing(ai.plan.get(s)),
                ) {
                    return Some(d);
                }
            }
            let actions = ei.actions.len().max(ai.actions.len());
            for s in 0..actions {
                if let Some(d) = differ(
                    turn,
                    it,
                    format!("action {}", s + 1),
                    missing(ei.actions.get(s)),
                    missing(ai.actions.get(s)),
                ) {
                    return Some(d);
                }
            }
        }
        if e.iterations.len() != a.iterations.len() {
            return differ(
                turn,
                None,
                "planner iterations",
                &e.iterations.len().to_string(),
                &a.iterations.len().to_string(),
            );
        }
        let checks = [
            ("thinker prompt", missing(e.thinker_prompt.as_ref()).to_string(), missing(a.thinker_prompt.as_ref()).to_string()),
            ("answer", e.answer.clone(), a.answer.clone()),
            ("tasks used", e.tasks_used.join(", "), a.tasks_used.join(", ")),
        ];
        for (field, ev, av) in checks {
            if let Some(d) = differ(turn, None, field, &ev, &av) {
                return Some(d);
            }
        }
    }
    if expected.len() != actual.len() {
        return differ(
            expected.len().min(actual.len()) + 1,
            None,
            "turn count",
            &expected.len().to_string(),
            &actual.len().to_string(),
        );
    }
    None
}
