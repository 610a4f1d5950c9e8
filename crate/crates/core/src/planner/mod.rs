//! Turns a question into either a validated plan or a finish signal.

mod react;
mod tot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{format_previous_actions, ActionRecord};
use crate::llm::{LlmBackend, LlmError, LlmParams};
use crate::plan::{PlanError, ValidatedPlan};
use crate::prompts::{PromptError, PromptTemplates};
use crate::task::TaskRegistry;
use crate::trace::PromptExchange;

pub use react::{build_react_prompt, parse_react_reply, plan_turn_react, ReactStep};
pub use tot::{
    build_stage1_prompt, build_stage2_prompt, extract_decision, finish_directive, plan_turn,
    DECISION_MARKER, FINISH_MARKER,
};

/// Everything the planner sees for one consultation.
#[derive(Debug, Clone)]
pub struct PlannerContext<'a> {
    pub registry: &'a TaskRegistry,
    pub templates: &'a PromptTemplates,
    /// One descriptor per metadata item.
    pub metadata: Vec<String>,
    pub history: String,
    /// Session action records, including those from the current turn.
    pub previous_actions: Vec<ActionRecord>,
    pub turn_id: u64,
    pub question: String,
}

impl<'a> PlannerContext<'a> {
    pub fn new(registry: &'a TaskRegistry, question: impl Into<String>) -> Self {
        Self {
            registry,
            templates: PromptTemplates::builtin(),
            metadata: Vec::new(),
            history: String::new(),
            previous_actions: Vec::new(),
            turn_id: 1,
            question: question.into(),
        }
    }

    pub fn metadata_text(&self) -> String {
        self.metadata.join("\n")
    }

    pub fn previous_actions_text(&self) -> String {
        format_previous_actions(&self.previous_actions)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlannerOutcomeKind {
    PlanProduced { plan: ValidatedPlan, decision: String },
    Finished { directive: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerOutcome {
    pub kind: PlannerOutcomeKind,
    pub raw_stage1: String,
    pub raw_stage2: Option<String>,
    pub exchanges: Vec<PromptExchange>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("the strategy reply has no `Decision:` marker")]
    MissingDecisionMarker,
    #[error("plan could not be parsed after repair: {0}")]
    PlanParseFailed(PlanError),
    #[error("backend error: {0}")]
    Backend(#[from] LlmError),
    #[error("prompt template error: {0}")]
    Template(#[from] PromptError),
    #[error("the question is empty")]
    EmptyQuestion,
}

/// A planner error together with the exchanges made before it occurred.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct PlannerFailure {
    pub error: PlannerError,
    pub exchanges: Vec<PromptExchange>,
}

impl PlannerFailure {
    pub(crate) fn new(error: impl Into<PlannerError>, exchanges: Vec<PromptExchange>) -> Self {
        Self {
            error: error.into(),
            exchanges,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Tot,
    React,
}

impl Strategy {
    pub fn plan_turn(
        self,
        ctx: &PlannerContext,
        llm: &dyn LlmBackend,
        params: &LlmParams,
    ) -> Result<PlannerOutcome, PlannerFailure> {
        if ctx.question.trim().is_empty() {
            return Err(PlannerFailure::new(PlannerError::EmptyQuestion, vec![]));
        }
        match self {
            Strategy::Tot => plan_turn(ctx, llm, params),
            Strategy::React => plan_turn_react(ctx, llm, params),
        }
    }
}
