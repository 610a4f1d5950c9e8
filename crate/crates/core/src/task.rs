//! Task metadata, executable bodies and the registry the planner reads from.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::MetadataItem;
use crate::value::{Argument, Payload};

/// Rule printed between task blocks in planner prompts (35 hyphens).
pub const TASK_RULE: &str = "-----------------------------------";

const DATA_PIPE_SENTENCE: &str = "The result will be stored in the Data Pipe.";

/// Planner-facing description of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub chat_name: String,
    pub description: String,
    #[serde(default)]
    pub dependencies: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// When true the result goes to the data pipe and only its key circulates.
    pub output_type: bool,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |reason: String| RegistryError::InvalidSpec {
            name: self.name.clone(),
            reason,
        };
        if !is_task_name(&self.name) {
            return Err(invalid("name must match [a-z][a-z0-9_]*".into()));
        }
        if self.chat_name.trim().is_empty() {
            return Err(invalid("chat_name is empty".into()));
        }
        if self.inputs.is_empty() {
            return Err(invalid("inputs list is empty".into()));
        }
        if self.outputs.is_empty() {
            return Err(invalid("outputs list is empty".into()));
        }
        if let Some(i) = self.inputs.iter().position(|s| s.trim().is_empty()) {
            return Err(invalid(format!("input {} is empty", i + 1)));
        }
        if let Some(i) = self.outputs.iter().position(|s| s.trim().is_empty()) {
            return Err(invalid(format!("output {} is empty", i + 1)));
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.inputs.len()
    }
}

pub fn is_task_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

/// What a task body hands back to the executor.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutput {
    pub payload: Payload,
    pub produced_metadata: Vec<MetadataItem>,
}

impl TaskOutput {
    pub fn new(payload: impl Into<Payload>) -> Self {
        Self {
            payload: payload.into(),
            produced_metadata: Vec::new(),
        }
    }
}

/// Failure raised inside a task body. `kind` is a short machine-readable tag
/// (`UnknownPatient`, `BadDate`, ...) that also shows up in planner prompts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind}: {message}")]
pub struct TaskError {
    pub kind: String,
    pub message: String,
}

impl TaskError {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn invalid_input(message: impl Into<String>) -> Self {
        Self::new("InvalidInput", message)
    }
}

/// Executable half of a task. Receives exactly `spec.inputs.len()` arguments
/// with data pipe references already resolved.
pub trait TaskBody: Send + Sync {
    fn execute(&self, args: &[Argument]) -> Result<TaskOutput, TaskError>;
}

impl<F> TaskBody for F
where
    F: Fn(&[Argument]) -> Result<TaskOutput, TaskError> + Send + Sync,
{
    fn execute(&self, args: &[Argument]) -> Result<TaskOutput, TaskError> {
        self(args)
    }
}

#[derive(Clone)]
pub struct RegisteredTask {
    pub spec: TaskSpec,
    pub body: Arc<dyn TaskBody>,
}

impl fmt::Debug for RegisteredTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegisteredTask")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("task `{0}` is already registered")]
    DuplicateName(String),
    #[error("invalid task spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{task}` depends on unregistered task `{dependency}`")]
    UnknownDependency { task: String, dependency: String },
}

/// Ordered task registry. Iteration follows registration order so rendered
/// prompts are reproducible.
#[derive(Debug, Clone, Default)]
pub struct TaskRegistry {
    tasks: Vec<RegisteredTask>,
    index: HashMap<String, usize>,
}

impl TaskRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        spec: TaskSpec,
        body: Arc<dyn TaskBody>,
    ) -> Result<&RegisteredTask, RegistryError> {
        spec.validate()?;
        if self.index.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateName(spec.name));
        }
        self.index.insert(spec.name.clone(), self.tasks.len());
        self.tasks.push(RegisteredTask { spec, body });
        Ok(self.tasks.last().expect("just pushed"))
    }

    pub fn lookup(&self, name: &str) -> Result<&RegisteredTask, RegistryError> {
        self.index
            .get(name)
            .map(|&i| &self.tasks[i])
            .ok_or_else(|| RegistryError::UnknownTask(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RegisteredTask> {
        self.tasks.iter()
    }

    pub fn specs(&self) -> impl Iterator<Item = &TaskSpec> {
        self.tasks.iter().map(|t| &t.spec)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Checks that every dependency names a registered task. Run once all
    /// registrations are done, before the first plan is built.
    pub fn check_dependencies(&self) -> Result<(), RegistryError> {
        for task in &self.tasks {
            for dep in &task.spec.dependencies {
                if !self.contains(dep) {
                    return Err(RegistryError::UnknownDependency {
                        task: task.spec.name.clone(),
                        dependency: dep.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// A registry restricted to `names`, keeping this registry's order.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<TaskRegistry, RegistryError> {
        for name in names {
            self.lookup(name.as_ref())?;
        }
        let mut out = TaskRegistry::new();
        for task in &self.tasks {
            if names.iter().any(|n| n.as_ref() == task.spec.name) {
                out.register(task.spec.clone(), task.body.clone())?;
            }
        }
        Ok(out)
    }
}

fn dependency_line(spec: &TaskSpec) -> String {
    if spec.dependencies.is_empty() {
        String::new()
    } else {
        format!(
            "\nThis tool depends on the following tools: {}",
            spec.dependencies.join(", ")
        )
    }
}

/// Stage-one task block: name, description and outputs. The surrounding
/// rules are added by the prompt builder.
pub fn render_task_brief(spec: &TaskSpec) -> String {
    format!(
        "**{}**: {}{}\nThis tool have the following outputs:\n{}",
        spec.name,
        spec.description,
        dependency_line(spec),
        spec.outputs.join("\n")
    )
}

/// Stage-two task block with numbered inputs and the data pipe note.
pub fn render_task_full(spec: &TaskSpec) -> String {
    let mut out = format!(
        "**{}**: {}{}\nThe input to this tool should be a list of data representing:\n",
        spec.name,
        spec.description,
        dependency_line(spec)
    );
    for (i, input) in spec.inputs.iter().enumerate() {
        out.push_str(&format!("{}-{}\n", i + 1, input));
    }
    out.push_str("This tool will return the following data:\n");
    out.push_str(&format!("- {}", spec.outputs.join("\n- ")));
    if spec.output_type {
        out.push('\n');
        out.push_str(DATA_PIPE_SENTENCE);
    }
    out
}

/// Joins task blocks with rules before, between and after them.
pub fn render_task_section(blocks: impl IntoIterator<Item = String>) -> String {
    let mut out = format!("{TASK_RULE}\n");
    for block in blocks {
        out.push_str(&block);
        out.push('\n');
        out.push_str(TASK_RULE);
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("task `{task}` binds to unknown body `{body}`")]
    UnboundBody { task: String, body: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Deserialize)]
struct ManifestFile {
    #[serde(default)]
    task: Vec<ManifestRecord>,
}

#[derive(Debug, Deserialize)]
struct ManifestRecord {
    #[serde(flatten)]
    spec: TaskSpec,
    body: Option<String>,
}

/// Built-in task bodies addressable by name from a manifest.
pub type BodyCatalog = HashMap<String, Arc<dyn TaskBody>>;

/// Parses a TOML task manifest (`[[task]]` records). Each record binds to a
/// catalog body named by its `body` field, defaulting to the task name.
pub fn parse_manifest(
    text: &str,
    catalog: &BodyCatalog,
) -> Result<Vec<RegisteredTask>, ManifestError> {
    let file: ManifestFile =
        toml::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
    file.task
        .into_iter()
        .map(|record| {
            let body_name = record.body.unwrap_or_else(|| record.spec.name.clone());
            let body = catalog
                .get(&body_name)
                .cloned()
                .ok_or_else(|| ManifestError::UnboundBody {
                    task: record.spec.name.clone(),
                    body: body_name,
                })?;
            record.spec.validate()?;
            Ok(RegisteredTask {
                spec: record.spec,
                body,
            })
        })
        .collect()
}

pub fn load_manifest(path: &Path, catalog: &BodyCatalog) -> Result<TaskRegistry, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut registry = TaskRegistry::new();
    for task in parse_manifest(&text, catalog)? {
        registry.register(task.spec, task.body)?;
    }
    registry.check_dependencies()?;
    Ok(registry)
}
