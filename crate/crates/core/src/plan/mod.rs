//! The restricted plan notation emitted by the planner's code stage.
//!
//! Only four statement forms are recognised, all assignments:
//!
//! ```text
//! x = self.execute_task('task_name', [arg, ...])
//! x = y['key']
//! x = 'literal'
//! x = y
//! ```
//!
//! where each `arg` is a string literal, a variable or `var['key']`.
//! Anything else is a syntax error; plan code is never evaluated.

mod lexer;
mod parser;

use std::collections::HashSet;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::TaskRegistry;
use crate::value::py_str_repr;

pub use parser::parse_plan;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanArg {
    Literal { value: String },
    Var { name: String },
    Field { var: String, key: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepAction {
    TaskCall { task: String, args: Vec<PlanArg> },
    FieldExtract { source: String, key: String },
    Literal { value: String },
    Alias { source: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanStep {
    pub binding: String,
    pub action: StepAction,
}

impl PlanStep {
    /// Variables this step reads.
    pub fn reads(&self) -> Vec<&str> {
        match &self.action {
            StepAction::TaskCall { args, .. } => args
                .iter()
                .filter_map(|a| match a {
                    PlanArg::Literal { .. } => None,
                    PlanArg::Var { name } => Some(name.as_str()),
                    PlanArg::Field { var, .. } => Some(var.as_str()),
                })
                .collect(),
            StepAction::FieldExtract { source, .. } | StepAction::Alias { source } => {
                vec![source.as_str()]
            }
            StepAction::Literal { .. } => vec![],
        }
    }

    pub fn task_name(&self) -> Option<&str> {
        match &self.action {
            StepAction::TaskCall { task, .. } => Some(task),
            _ => None,
        }
    }
}

/// A parsed plan. Equality is structural: only the steps are compared,
/// not the source text or line positions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    /// Source line of each step (1-based), parallel to `steps`.
    #[serde(default)]
    pub lines: Vec<usize>,
    pub source_text: String,
}

impl PartialEq for Plan {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
    }
}

impl Plan {
    pub fn from_steps(steps: Vec<PlanStep>) -> Self {
        let lines = (1..=steps.len()).collect();
        let mut plan = Plan {
            steps,
            lines,
            source_text: String::new(),
        };
        plan.source_text = render_canonical(&plan);
        plan
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn task_calls(&self) -> impl Iterator<Item = &PlanStep> {
        self.steps.iter().filter(|s| s.task_name().is_some())
    }

    fn line_of(&self, index: usize) -> usize {
        self.lines.get(index).copied().unwrap_or(index + 1)
    }
}

/// A plan that has been checked against a registry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedPlan(Plan);

impl ValidatedPlan {
    pub fn into_inner(self) -> Plan {
        self.0
    }
}

impl Deref for ValidatedPlan {
    type Target = Plan;
    fn deref(&self) -> &Plan {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("syntax error at line {line}, column {column}: expected {expected}")]
    SyntaxError {
        line: usize,
        column: usize,
        expected: String,
    },
    #[error("variable `{variable}` used before it is defined (line {line})")]
    UseBeforeDefine { variable: String, line: usize },
    #[error("the code block is empty")]
    EmptyBlock,
    #[error("step {step} calls unknown task `{name}`")]
    UnknownTask { name: String, step: usize },
    #[error("task `{task}` expects {expected} input(s) but got {got}")]
    ArityMismatch {
        task: String,
        expected: usize,
        got: usize,
    },
    #[error("the plan does not call any task")]
    NoTaskCall,
}

impl PlanError {
    pub(crate) fn syntax(line: usize, column: usize, expected: impl Into<String>) -> Self {
        PlanError::SyntaxError {
            line,
            column,
            expected: expected.into(),
        }
    }
}

/// Pulls the plan code out of a model reply: the first fenced block tagged
/// `tag`, else the first fenced block of any tag, else the whole reply.
pub fn extract_code_block(llm_output: &str, tag: &str) -> Result<String, PlanError> {
    let mut blocks: Vec<(String, Vec<&str>)> = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in llm_output.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("```") {
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some((rest.trim().to_ascii_lowercase(), Vec::new())),
            }
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }
    if blocks.is_empty() {
        return Ok(llm_output.trim().to_string());
    }
    let tag = tag.to_ascii_lowercase();
    let (_, body) = blocks
        .iter()
        .find(|(t, _)| *t == tag)
        .unwrap_or(&blocks[0]);
    let code = body.join("\n");
    let meaningful = code
        .lines()
        .map(str::trim)
        .any(|l| !l.is_empty() && !l.starts_with('#'));
    if !meaningful {
        return Err(PlanError::EmptyBlock);
    }
    Ok(code.trim_matches('\n').to_string())
}

/// Static checks against the registry: known tasks, matching arity,
/// definitions before uses, and at least one task call.
pub fn validate_plan(plan: Plan, registry: &TaskRegistry) -> Result<ValidatedPlan, PlanError> {
    let mut defined: HashSet<&str> = HashSet::new();
    for (index, step) in plan.steps.iter().enumerate() {
        for var in step.reads() {
            if !defined.contains(var) {
                return Err(PlanError::UseBeforeDefine {
                    variable: var.to_string(),
                    line: plan.line_of(index),
                });
            }
        }
        if let StepAction::TaskCall { task, args } = &step.action {
            let registered = registry.lookup(task).map_err(|_| PlanError::UnknownTask {
                name: task.clone(),
                step: index,
            })?;
            if registered.spec.arity() != args.len() {
                return Err(PlanError::ArityMismatch {
                    task: task.clone(),
                    expected: registered.spec.arity(),
                    got: args.len(),
                });
            }
        }
        defined.insert(&step.binding);
    }
    if !plan.is_empty() && plan.task_calls().next().is_none() {
        return Err(PlanError::NoTaskCall);
    }
    Ok(ValidatedPlan(plan))
}

/// Canonical source for a plan; `parse_plan(render_canonical(p)) == p`.
pub fn render_canonical(plan: &Plan) -> String {
    plan.steps
        .iter()
        .map(render_step)
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_arg(arg: &PlanArg) -> String {
    match arg {
        PlanArg::Literal { value } => py_str_repr(value),
        PlanArg::Var { name } => name.clone(),
        PlanArg::Field { var, key } => format!("{var}[{}]", py_str_repr(key)),
    }
}

pub fn render_step(step: &PlanStep) -> String {
    let rhs = match &step.action {
        StepAction::TaskCall { task, args } => format!(
            "self.execute_task({}, [{}])",
            py_str_repr(task),
            args.iter().map(render_arg).collect::<Vec<_>>().join(", ")
        ),
        StepAction::FieldExtract { source, key } => format!("{source}[{}]", py_str_repr(key)),
        StepAction::Literal { value } => py_str_repr(value),
        StepAction::Alias { source } => source.clone(),
    };
    format!("{} = {rhs}", step.binding)
}
