//! Runs validated plans step by step against the registry and data pipe.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::datapipe::{is_reference, DataPipe, DatapipeError, ResolveError};
use crate::plan::{PlanArg, StepAction, ValidatedPlan};
use crate::session::MetadataItem;
use crate::task::{TaskError, TaskRegistry};
use crate::value::{prompt_text, py_list_repr, Argument, Payload};

/// Separator framing each rendered action block.
pub const ACTION_RULE: &str = "------------------";

/// Task name recorded when a `x = y['key']` step fails.
pub const FIELD_EXTRACT_TASK: &str = "field_extract";

/// One executed step as the planner and responder see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub turn_id: u64,
    /// Dense index over the records of one plan run.
    pub step_index: usize,
    pub task_name: String,
    pub chat_name: String,
    /// Inputs as passed, data pipe references left symbolic.
    pub rendered_inputs: Vec<String>,
    /// The data pipe reference for `output_type` tasks, else the payload text.
    pub rendered_output: String,
    pub duration_ms: f64,
    #[serde(default)]
    pub failed: bool,
}

impl ActionRecord {
    pub fn render(&self) -> String {
        format!(
            "{ACTION_RULE}\n{}: {}\n{}\n{ACTION_RULE}\n",
            self.task_name,
            py_list_repr(&self.rendered_inputs),
            self.rendered_output
        )
    }
}

/// Concatenated action blocks in record order; empty for no records.
pub fn format_previous_actions(records: &[ActionRecord]) -> String {
    records.iter().map(ActionRecord::render).collect()
}

/// What a plan variable holds during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Binding {
    Text(String),
    Reference(String),
    Value(Value),
}

impl Binding {
    fn rendered(&self) -> String {
        match self {
            Binding::Text(s) | Binding::Reference(s) => s.clone(),
            Binding::Value(v) => prompt_text(v),
        }
    }

    fn as_argument(&self) -> Argument {
        match self {
            Binding::Text(s) | Binding::Reference(s) => Argument::Text(s.clone()),
            Binding::Value(v) => Argument::Payload(Payload::Value(v.clone())),
        }
    }

    fn from_value(v: Value) -> Self {
        match v {
            Value::String(s) if is_reference(&s) => Binding::Reference(s),
            Value::String(s) => Binding::Text(s),
            other => Binding::Value(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("{0}")]
    Task(TaskError),
    #[error("{0}")]
    Resolve(String),
    #[error("UnknownKey: {0}")]
    UnknownKey(String),
    #[error("FieldMissing: `{variable}` has no key '{key}'")]
    FieldMissing { variable: String, key: String },
    #[error("UnknownTask: {0}")]
    UnknownTask(String),
    #[error("StorageFailure: {0}")]
    Storage(String),
}

impl From<ResolveError> for StepError {
    fn from(e: ResolveError) -> Self {
        match e.source {
            DatapipeError::UnknownKey(k) => StepError::UnknownKey(k),
            other => StepError::Resolve(format!("argument {}: {other}", e.position)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecutionStatus {
    Completed,
    FailedAtStep { index: usize, error: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionOutcome {
    pub records: Vec<ActionRecord>,
    pub bindings: BTreeMap<String, Binding>,
    pub status: ExecutionStatus,
    /// Files produced by tasks during the run.
    pub produced_metadata: Vec<MetadataItem>,
}

struct Run<'a> {
    registry: &'a TaskRegistry,
    pipe: &'a DataPipe,
    turn_id: u64,
    records: Vec<ActionRecord>,
    bindings: BTreeMap<String, Binding>,
    produced_metadata: Vec<MetadataItem>,
}

/// Executes the plan in order, stopping at the first failing step.
pub fn run_plan(
    plan: &ValidatedPlan,
    registry: &TaskRegistry,
    pipe: &DataPipe,
    turn_id: u64,
) -> ExecutionOutcome {
    let mut run = Run {
        registry,
        pipe,
        turn_id,
        records: Vec::new(),
        bindings: BTreeMap::new(),
        produced_metadata: Vec::new(),
    };
    let mut status = ExecutionStatus::Completed;
    for (index, step) in plan.steps.iter().enumerate() {
        let result = match &step.action {
            StepAction::TaskCall { task, args } => run.task_call(task, args),
            StepAction::FieldExtract { source, key } => run.field_extract(source, key),
            StepAction::Literal { value } => Ok(Binding::Text(value.clone())),
            StepAction::Alias { source } => run.lookup(source).cloned(),
        };
        match result {
            Ok(binding) => {
                run.bindings.insert(step.binding.clone(), binding);
            }
            Err(error) => {
                status = ExecutionStatus::FailedAtStep {
                    index,
                    error: error.to_string(),
                };
                break;
            }
        }
    }
    ExecutionOutcome {
        records: run.records,
        bindings: run.bindings,
        status,
        produced_metadata: run.produced_metadata,
    }
}

impl Run<'_> {
    fn lookup(&self, var: &str) -> Result<&Binding, StepError> {
        self.bindings
            .get(var)
            .ok_or_else(|| StepError::Resolve(format!("variable `{var}` is not bound")))
    }

    fn field(&self, var: &str, key: &str) -> Result<Binding, StepError> {
        let missing = || StepError::FieldMissing {
            variable: var.to_string(),
            key: key.to_string(),
        };
        let structured = match self.lookup(var)? {
            Binding::Value(v) => v.clone(),
            Binding::Text(s) => serde_json::from_str(s).map_err(|_| missing())?,
            Binding::Reference(r) => match self.pipe.retrieve(r) {
                Ok(Payload::Value(v)) => v,
                Ok(Payload::Blob(_)) => return Err(missing()),
                Err(DatapipeError::UnknownKey(k)) => return Err(StepError::UnknownKey(k)),
                Err(e) => return Err(StepError::Storage(e.to_string())),
            },
        };
        structured
            .get(key)
            .cloned()
            .map(Binding::from_value)
            .ok_or_else(missing)
    }

    fn push_record(
        &mut self,
        task_name: &str,
        chat_name: &str,
        inputs: Vec<String>,
        output: String,
        started: Instant,
        failed: bool,
    ) {
        self.records.push(ActionRecord {
            turn_id: self.turn_id,
            step_index: self.records.len(),
            task_name: task_name.to_string(),
            chat_name: chat_name.to_string(),
            rendered_inputs: inputs,
            rendered_output: output,
            duration_ms: started.elapsed().as_secs_f64() * 1000.0,
            failed,
        });
    }

    fn field_extract(&mut self, source: &str, key: &str) -> Result<Binding, StepError> {
        let started = Instant::now();
        self.field(source, key).inspect_err(|e| {
            self.push_record(
                FIELD_EXTRACT_TASK,
                "FieldExtract",
                vec![source.to_string(), key.to_string()],
                format!("FAILED: {e}"),
                started,
                true,
            )
        })
    }

    fn task_call(&mut self, task: &str, args: &[PlanArg]) -> Result<Binding, StepError> {
        let started = Instant::now();
        let registered = self
            .registry
            .lookup(task)
            .map_err(|_| StepError::UnknownTask(task.to_string()))?
            .clone();
        let mut inputs = Vec::with_capacity(args.len());
        let mut call_args = Vec::with_capacity(args.len());
        let mut arg_error = None;
        for arg in args {
            let binding = match arg {
                PlanArg::Literal { value } => Ok(Binding::Text(value.clone())),
                PlanArg::Var { name } => self.lookup(name).cloned(),
                PlanArg::Field { var, key } => self.field(var, key),
            };
            match binding {
                Ok(b) => {
                    inputs.push(b.rendered());
                    call_args.push(b.as_argument());
                }
                Err(e) => {
                    inputs.push(match arg {
                        PlanArg::Literal { value } => value.clone(),
                        PlanArg::Var { name } => name.clone(),
                        PlanArg::Field { var, key } => format!("{var}['{key}']"),
                    });
                    arg_error.get_or_insert(e);
                }
            }
        }
        let spec = &registered.spec;
        let result = match arg_error {
            Some(e) => Err(e),
            None => self
                .pipe
                .resolve_arguments(&call_args)
                .map_err(StepError::from)
                .and_then(|resolved| registered.body.execute(&resolved).map_err(StepError::Task)),
        };
        let output = match result {
            Ok(output) => output,
            Err(e) => {
                self.push_record(
                    &spec.name,
                    &spec.chat_name,
                    inputs,
                    format!("FAILED: {e}"),
                    started,
                    true,
                );
                return Err(e);
            }
        };
        self.produced_metadata.extend(output.produced_metadata);
        let binding = match output.payload {
            payload if spec.output_type => self.store(payload, &spec.name)?,
            Payload::Blob(blob) => self.store(Payload::Blob(blob), &spec.name)?,
            Payload::Value(v) => Binding::from_value(v),
        };
        self.push_record(
            &spec.name,
            &spec.chat_name,
            inputs,
            binding.rendered(),
            started,
            false,
        );
        Ok(binding)
    }

    fn store(&self, payload: Payload, producer: &str) -> Result<Binding, StepError> {
        self.pipe
            .store(payload, producer)
            .map(Binding::Reference)
            .map_err(|e| StepError::Storage(e.to_string()))
    }
}
