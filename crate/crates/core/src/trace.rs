//! Structured record of everything a turn did, for replay and explainability.

use serde::{Deserialize, Serialize};

use crate::executor::ActionRecord;
use crate::plan::PlanStep;

/// One prompt sent to a model and the text it returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExchange {
    /// `stage1`, `stage2`, `repair`, `react` or `thinker`.
    pub stage: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationOutcome {
    Plan,
    Finished,
    PlannerFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub exchanges: Vec<PromptExchange>,
    pub outcome: IterationOutcome,
    #[serde(default)]
    pub decision: Option<String>,
    #[serde(default)]
    pub plan_source: Option<String>,
    #[serde(default)]
    pub plan_steps: Vec<PlanStep>,
    #[serde(default)]
    pub records: Vec<ActionRecord>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnStatus {
    #[default]
    Answered,
    /// The planner failed; the answer was produced from partial results.
    Degraded,
    BackendError,
    /// Answered from recorded actions without a model call.
    Explained,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn_id: u64,
    pub iterations: Vec<IterationTrace>,
    #[serde(default)]
    pub thinker: Option<PromptExchange>,
    pub status: TurnStatus,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TurnTrace {
    pub fn new(turn_id: u64) -> Self {
        Self {
            turn_id,
            ..Self::default()
        }
    }

    /// Every prompt sent during the turn, in order.
    pub fn prompts(&self) -> impl Iterator<Item = &str> {
        self.iterations
            .iter()
            .flat_map(|it| it.exchanges.iter())
            .chain(self.thinker.iter())
            .map(|e| e.prompt.as_str())
    }

    pub fn records(&self) -> impl Iterator<Item = &ActionRecord> {
        self.iterations.iter().flat_map(|it| it.records.iter())
    }

    /// Number of times the planner was consulted.
    pub fn planner_turns(&self) -> usize {
        self.iterations.len()
    }
}
