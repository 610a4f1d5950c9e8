//! Single-prompt Thought/Action/Observation planning, one task per step.

use crate::executor::{format_previous_actions, ActionRecord};
use crate::llm::{ChatMessage, LlmBackend, LlmParams};
use crate::plan::{parse_plan, validate_plan, PlanError, ValidatedPlan};
use crate::prompts::REACT;
use crate::task::{render_task_full, render_task_section};
use crate::trace::PromptExchange;
use crate::value::{py_list_repr, py_str_repr};

use super::tot::FINISH_MARKER;
use super::{PlannerContext, PlannerError, PlannerFailure, PlannerOutcome, PlannerOutcomeKind};

const ACTION: &str = "Action:";
const ACTION_INPUT: &str = "Action Input:";
const THOUGHT: &str = "Thought:";

/// Parsed form of one ReAct reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReactStep {
    Action {
        thought: String,
        task: String,
        input: String,
    },
    Final(String),
    Malformed,
}

fn scratchpad(records: &[&ActionRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "{ACTION} {}\n{ACTION_INPUT} {}\nObservation: {}\n",
                r.task_name,
                py_list_repr(&r.rendered_inputs),
                r.rendered_output
            )
        })
        .collect()
}

pub fn build_react_prompt(ctx: &PlannerContext) -> Result<String, PlannerError> {
    let (earlier, current): (Vec<&ActionRecord>, Vec<&ActionRecord>) = ctx
        .previous_actions
        .iter()
        .partition(|r| r.turn_id < ctx.turn_id);
    let earlier: Vec<ActionRecord> = earlier.into_iter().cloned().collect();
    let tools = render_task_section(ctx.registry.specs().map(render_task_full));
    let names = ctx
        .registry
        .specs()
        .map(|s| s.name.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    let previous = format_previous_actions(&earlier);
    Ok(ctx.templates.render(
        REACT,
        &[
            ("tools", &tools),
            ("tool_names", &names),
            ("metadata", &ctx.metadata_text()),
            ("history", &ctx.history),
            ("previous_actions", previous.trim_end()),
            ("question", &ctx.question),
            ("scratchpad", &scratchpad(&current)),
        ],
    )?)
}

/// Reads the first Action or Final Answer in the reply.
pub fn parse_react_reply(reply: &str) -> ReactStep {
    let lines: Vec<&str> = reply.lines().collect();
    let mut thought = String::new();
    for (i, line) in lines.iter().enumerate() {
        let line = line.trim();
        if let Some(t) = line.strip_prefix(THOUGHT) {
            thought = t.trim().to_string();
        } else if let Some(rest) = line.strip_prefix(FINISH_MARKER) {
            let mut text = vec![rest.trim()];
            text.extend(lines[i + 1..].iter().map(|l| l.trim_end()));
            return ReactStep::Final(text.join("\n").trim().to_string());
        } else if let Some(task) = line.strip_prefix(ACTION) {
            let input = lines[i + 1..]
                .iter()
                .map(|l| l.trim())
                .find_map(|l| l.strip_prefix(ACTION_INPUT))
                .unwrap_or("[]")
                .trim()
                .to_string();
            return ReactStep::Action {
                thought,
                task: task.trim().to_string(),
                input,
            };
        }
    }
    ReactStep::Malformed
}

fn action_plan(task: &str, input: &str, ctx: &PlannerContext) -> Result<ValidatedPlan, PlanError> {
    let list = if input.starts_with('[') {
        input.to_string()
    } else {
        let bare = input.trim_matches(|c| c == '\'' || c == '"');
        format!("[{}]", py_str_repr(bare))
    };
    let code = format!("result = self.execute_task({}, {list})", py_str_repr(task));
    validate_plan(parse_plan(&code)?, ctx.registry)
}

fn interpret(reply: &str, ctx: &PlannerContext) -> Result<PlannerOutcomeKind, PlanError> {
    match parse_react_reply(reply) {
        ReactStep::Final(directive) => Ok(PlannerOutcomeKind::Finished { directive }),
        ReactStep::Action {
            thought,
            task,
            input,
        } => {
            let plan = action_plan(&task, &input, ctx)?;
            Ok(PlannerOutcomeKind::PlanProduced {
                plan,
                decision: thought,
            })
        }
        ReactStep::Malformed => Err(PlanError::NoTaskCall),
    }
}

fn correction(error: &PlanError, ctx: &PlannerContext) -> String {
    let names: Vec<&str> = ctx.registry.specs().map(|s| s.name.as_str()).collect();
    match error {
        PlanError::UnknownTask { name, .. } => format!(
            "`{name}` is not an available tool. Choose the Action from [{}].",
            names.join(", ")
        ),
        PlanError::NoTaskCall => {
            "Reply with an Action and Action Input, or with a Final Answer.".to_string()
        }
        other => format!("That action could not be used: {other}. Try again."),
    }
}

pub fn plan_turn_react(
    ctx: &PlannerContext,
    llm: &dyn LlmBackend,
    params: &LlmParams,
) -> Result<PlannerOutcome, PlannerFailure> {
    let prompt = build_react_prompt(ctx).map_err(|e| PlannerFailure::new(e, vec![]))?;
    let mut messages = vec![ChatMessage::user(prompt.clone())];
    let mut exchanges = Vec::new();
    let reply = llm
        .complete(&messages, params)
        .map_err(|e| PlannerFailure::new(e, vec![]))?;
    exchanges.push(PromptExchange {
        stage: "react".into(),
        prompt,
        response: reply.clone(),
    });
    let (kind, final_reply) = match interpret(&reply, ctx) {
        Ok(kind) => (kind, reply),
        Err(first) => {
            tracing::warn!(error = %first, "react step rejected, re-prompting");
            let note = correction(&first, ctx);
            messages.push(ChatMessage::assistant(reply));
            messages.push(ChatMessage::user(note.clone()));
            let retry = llm
                .complete(&messages, params)
                .map_err(|e| PlannerFailure::new(e, exchanges.clone()))?;
            exchanges.push(PromptExchange {
                stage: "repair".into(),
                prompt: note,
                response: retry.clone(),
            });
            match interpret(&retry, ctx) {
                Ok(kind) => (kind, retry),
                Err(e) => {
                    return Err(PlannerFailure::new(
                        PlannerError::PlanParseFailed(e),
                        exchanges,
                    ))
                }
            }
        }
    };
    Ok(PlannerOutcome {
        kind,
        raw_stage1: final_reply,
        raw_stage2: None,
        exchanges,
    })
}
