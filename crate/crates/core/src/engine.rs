//! The turn loop tying planner, executor, responder and translation together.

use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapipe::DataPipe;
use crate::executor::{format_previous_actions, run_plan, ExecutionStatus, FIELD_EXTRACT_TASK};
use crate::llm::{LlmBackend, LlmError, LlmParams};
use crate::planner::{PlannerContext, PlannerError, PlannerOutcomeKind, Strategy};
use crate::prompts::PromptTemplates;
use crate::response::{build_thinker_prompt_with, complete_answer, ThinkerBundle};
use crate::session::{metadata_text, ConversationTurn, MetadataItem, Session};
use crate::task::TaskRegistry;
use crate::trace::{IterationOutcome, IterationTrace, PromptExchange, TurnStatus, TurnTrace};
use crate::translation::{detect_language, translate, LangMode, LanguageTag, TranslationClient};
use crate::value::Payload;

pub const BACKEND_APOLOGY: &str =
    "I'm sorry, I could not reach the language model service to answer this question. Please try again in a moment.";

pub const DEGRADED_PREFIX: &str = "The planned steps could not be completed. Begin the answer with a short apology and answer only from the information that was gathered";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineSettings {
    pub strategy: Strategy,
    pub max_iterations: usize,
    pub lang_mode: LangMode,
    pub response_prefix: Option<String>,
    pub planner_params: LlmParams,
    pub responder_params: LlmParams,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            strategy: Strategy::Tot,
            max_iterations: 3,
            lang_mode: LangMode::Translate,
            response_prefix: None,
            planner_params: LlmParams::planner_default(),
            responder_params: LlmParams::responder_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("the query is empty")]
    EmptyQuery,
    #[error("unknown metadata reference `{0}`")]
    UnknownMetadata(String),
    #[error("invalid engine settings: {0}")]
    InvalidSettings(String),
}

/// Planner-ready form of an inbound query.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    /// Question in the planning language.
    pub question: String,
    pub source_language: LanguageTag,
    /// True when the question was translated into English.
    pub translated: bool,
    pub metadata: Vec<String>,
    pub warnings: Vec<String>,
}

/// Detects the language, translates when asked to, and renders metadata
/// descriptors. Translation failures fall back to the source text.
pub fn prepare_input(
    raw_query: &str,
    metadata: &[MetadataItem],
    lang_mode: LangMode,
    explicit_language: Option<&LanguageTag>,
    translator: Option<&dyn TranslationClient>,
) -> Result<PreparedInput, EngineError> {
    let query = raw_query.trim();
    if query.is_empty() {
        return Err(EngineError::EmptyQuery);
    }
    let source_language = match explicit_language {
        Some(tag) => tag.clone(),
        None => detect_language(query).map_err(|_| EngineError::EmptyQuery)?,
    };
    let mut warnings = Vec::new();
    let mut question = query.to_string();
    let mut translated = false;
    if lang_mode == LangMode::Translate && !source_language.is_english() {
        match translator {
            Some(client) => match translate(query, &source_language, &LanguageTag::english(), client)
            {
                Ok(text) => {
                    question = text;
                    translated = true;
                }
                Err(e) => {
                    tracing::warn!(error = %e, "query translation failed, planning in source language");
                    warnings.push(format!("query translation failed: {e}"));
                }
            },
            None => warnings.push("no translation client configured".into()),
        }
    }
    Ok(PreparedInput {
        question,
        source_language,
        translated,
        metadata: metadata.iter().map(MetadataItem::descriptor).collect(),
        warnings,
    })
}

/// Follow-ups asking which tasks were used are answered from the records.
pub fn is_explainability_query(question: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(name|list|which|what)\b.*\b(tasks?|tools?)\b.*\b(used?|did you)\b")
            .expect("explain regex")
    })
    .is_match(question)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub turn_id: u64,
    pub answer: String,
    pub tasks_used: Vec<String>,
    pub language: LanguageTag,
    pub trace: TurnTrace,
}

#[derive(Debug, Clone, Default)]
pub struct TurnRequest {
    pub query: String,
    /// Data pipe references of files attached to this query.
    pub metadata: Vec<String>,
    /// Explicit language, bypassing detection.
    pub language: Option<LanguageTag>,
}

impl TurnRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            ..Self::default()
        }
    }
}

#[derive(Clone)]
pub struct Engine {
    pub registry: Arc<TaskRegistry>,
    pub pipe: Arc<DataPipe>,
    pub planner_llm: Arc<dyn LlmBackend>,
    pub responder_llm: Arc<dyn LlmBackend>,
    pub translator: Option<Arc<dyn TranslationClient>>,
    pub templates: Arc<PromptTemplates>,
    pub settings: EngineSettings,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("tasks", &self.registry.len())
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Engine using one backend for both roles and default settings.
    pub fn new(
        registry: Arc<TaskRegistry>,
        pipe: Arc<DataPipe>,
        llm: Arc<dyn LlmBackend>,
    ) -> Self {
        Self {
            registry,
            pipe,
            planner_llm: llm.clone(),
            responder_llm: llm,
            translator: None,
            templates: Arc::new(PromptTemplates::default()),
            settings: EngineSettings::default(),
        }
    }

    pub fn with_settings(mut self, settings: EngineSettings) -> Result<Self, EngineError> {
        if settings.max_iterations == 0 {
            return Err(EngineError::InvalidSettings(
                "max_iterations must be at least 1".into(),
            ));
        }
        self.settings = settings;
        Ok(self)
    }

    pub fn with_translator(mut self, translator: Arc<dyn TranslationClient>) -> Self {
        self.translator = Some(translator);
        self
    }

    pub fn with_responder(mut self, llm: Arc<dyn LlmBackend>) -> Self {
        self.responder_llm = llm;
        self
    }

    fn attach_metadata(&self, session: &mut Session, refs: &[String]) -> Result<(), EngineError> {
        for reference in refs {
            if session.metadata_items.iter().any(|m| &m.reference == reference) {
                continue;
            }
            let entry = self
                .pipe
                .entry(reference)
                .map_err(|_| EngineError::UnknownMetadata(reference.clone()))?;
            let media_type = match &entry.payload {
                Payload::Blob(b) => b.media_type.clone(),
                Payload::Value(_) => "application/json".to_string(),
            };
            session.add_metadata(MetadataItem {
                reference: reference.clone(),
                kind: MetadataItem::kind_for_media_type(&media_type).to_string(),
                media_type,
                caption: String::new(),
            });
        }
        Ok(())
    }

    /// Runs one conversational turn and appends it to the session.
    pub fn orchestrate_turn(
        &self,
        session: &mut Session,
        request: &TurnRequest,
    ) -> Result<TurnResult, EngineError> {
        if request.query.trim().is_empty() {
            return Err(EngineError::EmptyQuery);
        }
        self.attach_metadata(session, &request.metadata)?;
        let input = prepare_input(
            &request.query,
            &session.metadata_items,
            self.settings.lang_mode,
            request.language.as_ref(),
            self.translator.as_deref(),
        )?;
        let turn_id = session.next_turn_id();
        let mut trace = TurnTrace::new(turn_id);
        trace.warnings.extend(input.warnings.iter().cloned());

        let answer_en = if is_explainability_query(&input.question) {
            trace.status = TurnStatus::Explained;
            explain(session)
        } else {
            self.plan_and_answer(session, &input, turn_id, &mut trace)
        };

        let answer = if input.translated {
            let client = self.translator.as_deref().expect("translated implies a client");
            match translate(
                &answer_en,
                &LanguageTag::english(),
                &input.source_language,
                client,
            ) {
                Ok(text) => text,
                Err(e) => {
                    tracing::warn!(error = %e, "answer translation failed, returning English");
                    trace.warnings.push(format!("answer translation failed: {e}"));
                    answer_en.clone()
                }
            }
        } else {
            answer_en.clone()
        };

        let tasks_used: Vec<String> = trace
            .records()
            .filter(|r| r.task_name != FIELD_EXTRACT_TASK)
            .map(|r| r.chat_name.clone())
            .collect();
        session.language = input.source_language.clone();
        session.history.push(ConversationTurn {
            turn_id,
            query: request.query.trim().to_string(),
            query_en: input.question.clone(),
            answer: answer.clone(),
            answer_en,
            language: input.source_language.clone(),
            tasks_used: tasks_used.clone(),
            trace: trace.clone(),
        });
        Ok(TurnResult {
            turn_id,
            answer,
            tasks_used,
            language: input.source_language,
            trace,
        })
    }

    fn plan_and_answer(
        &self,
        session: &mut Session,
        input: &PreparedInput,
        turn_id: u64,
        trace: &mut TurnTrace,
    ) -> String {
        let settings = &self.settings;
        let mut iterations = 0;
        let mut degraded = false;
        loop {
            let ctx = PlannerContext {
                registry: &self.registry,
                templates: &self.templates,
                metadata: input.metadata.clone(),
                history: session.history_text(),
                previous_actions: session.previous_actions.clone(),
                turn_id,
                question: input.question.clone(),
            };
            let outcome = settings.strategy.plan_turn(
                &ctx,
                self.planner_llm.as_ref(),
                &settings.planner_params,
            );
            let outcome = match outcome {
                Ok(outcome) => outcome,
                Err(failure) => {
                    let backend = matches!(failure.error, PlannerError::Backend(_));
                    trace.iterations.push(IterationTrace {
                        exchanges: failure.exchanges,
                        outcome: IterationOutcome::PlannerFailed,
                        decision: None,
                        plan_source: None,
                        plan_steps: vec![],
                        records: vec![],
                        error: Some(failure.error.to_string()),
                    });
                    if backend {
                        trace.status = TurnStatus::BackendError;
                        return BACKEND_APOLOGY.to_string();
                    }
                    degraded = true;
                    break;
                }
            };
            match outcome.kind {
                PlannerOutcomeKind::Finished { directive } => {
                    trace.iterations.push(IterationTrace {
                        exchanges: outcome.exchanges,
                        outcome: IterationOutcome::Finished,
                        decision: Some(directive),
                        plan_source: None,
                        plan_steps: vec![],
                        records: vec![],
                        error: None,
                    });
                    break;
                }
                PlannerOutcomeKind::PlanProduced { plan, decision } => {
                    let result = run_plan(&plan, &self.registry, &self.pipe, turn_id);
                    for item in &result.produced_metadata {
                        session.add_metadata(item.clone());
                    }
                    session.previous_actions.extend(result.records.iter().cloned());
                    let error = match &result.status {
                        ExecutionStatus::Completed => None,
                        ExecutionStatus::FailedAtStep { index, error } => {
                            Some(format!("step {index} failed: {error}"))
                        }
                    };
                    trace.iterations.push(IterationTrace {
                        exchanges: outcome.exchanges,
                        outcome: IterationOutcome::Plan,
                        decision: Some(decision),
                        plan_source: Some(plan.source_text.clone()),
                        plan_steps: plan.steps.clone(),
                        records: result.records,
                        error,
                    });
                    iterations += 1;
                    if iterations >= settings.max_iterations {
                        break;
                    }
                }
            }
        }

        let mut prefix = settings.response_prefix.clone().unwrap_or_default();
        if degraded {
            trace.status = TurnStatus::Degraded;
            let base = prefix.trim().trim_end_matches('.').to_string();
            prefix = if base.is_empty() {
                DEGRADED_PREFIX.to_string()
            } else {
                format!("{base}. {DEGRADED_PREFIX}")
            };
        }
        let bundle = ThinkerBundle {
            metadata: metadata_text(&session.metadata_items),
            history: session.history_text(),
            actions: format_previous_actions(&session.previous_actions),
            prefix: Some(prefix),
            question: input.question.clone(),
        };
        let prompt = build_thinker_prompt_with(&self.templates, &bundle)
            .expect("thinker template validated at override time");
        match complete_answer(
            &prompt,
            self.responder_llm.as_ref(),
            &settings.responder_params,
        ) {
            Ok((raw, clean)) => {
                trace.thinker = Some(PromptExchange {
                    stage: "thinker".into(),
                    prompt,
                    response: raw,
                });
                clean
            }
            Err(e) => {
                trace.status = TurnStatus::BackendError;
                trace.warnings.push(backend_warning(&e));
                trace.thinker = Some(PromptExchange {
                    stage: "thinker".into(),
                    prompt,
                    response: String::new(),
                });
                BACKEND_APOLOGY.to_string()
            }
        }
    }
}

fn backend_warning(e: &LlmError) -> String {
    format!("responder backend error: {e}")
}

/// Lists the chat names of the tasks run in the most recent turn that ran
/// any, without consulting a model.
fn explain(session: &Session) -> String {
    let last = session
        .history
        .iter()
        .rev()
        .find(|t| !t.tasks_used.is_empty());
    match last {
        Some(turn) => format!(
            "To answer \"{}\" I used the following tasks, in this order: {}.",
            turn.query_en,
            turn.tasks_used.join(", ")
        ),
        None => "I have not used any tasks in this conversation yet.".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explainability_phrases() {
        for q in [
            "Name the tasks used",
            "What tools did you use?",
            "which tasks were used for that?",
            "List the tools you used",
        ] {
            assert!(is_explainability_query(q), "{q}");
        }
        for q in ["How to improve my sleep?", "What is a task force?"] {
            assert!(!is_explainability_query(q), "{q}");
        }
    }

    #[test]
    fn english_query_unchanged() {
        let p = prepare_input("How to improve my sleep?", &[], LangMode::Translate, None, None)
            .unwrap();
        assert_eq!(p.question, "How to improve my sleep?");
        assert!(!p.translated);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn metadata_descriptor_listed() {
        let item = MetadataItem {
            reference: "datapipe:6d808840-1fbe-45a5-859a-abfbfee93d0e".into(),
            kind: "image".into(),
            media_type: "image/png".into(),
            caption: "meal photo".into(),
        };
        let p = prepare_input("What is in this meal?", &[item], LangMode::Translate, None, None)
            .unwrap();
        assert_eq!(
            p.metadata,
            vec!["image file datapipe:6d808840-1fbe-45a5-859a-abfbfee93d0e (meal photo)"]
        );
    }

    #[test]
    fn empty_query_rejected() {
        assert_eq!(
            prepare_input("  ", &[], LangMode::Retain, None, None),
            Err(EngineError::EmptyQuery)
        );
    }
}
