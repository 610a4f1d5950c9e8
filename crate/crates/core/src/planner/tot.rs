//! Two-stage planning: strategies and a decision, then plan code.

use crate::llm::{ChatMessage, LlmBackend, LlmParams};
use crate::plan::{extract_code_block, parse_plan, validate_plan, PlanError, ValidatedPlan};
use crate::prompts::{PromptError, PromptTemplates, REPAIR, STAGE1, STAGE2};
use crate::task::{render_task_brief, render_task_full, render_task_section};
use crate::trace::PromptExchange;

use super::{PlannerContext, PlannerError, PlannerFailure, PlannerOutcome, PlannerOutcomeKind};

pub const DECISION_MARKER: &str = "Decision:";
pub const FINISH_MARKER: &str = "Final Answer:";

pub fn build_stage1_prompt(ctx: &PlannerContext) -> String {
    try_stage1(ctx.templates, ctx).expect("built-in stage1 template renders")
}

fn try_stage1(templates: &PromptTemplates, ctx: &PlannerContext) -> Result<String, PromptError> {
    let tools = render_task_section(ctx.registry.specs().map(render_task_brief));
    let previous = ctx.previous_actions_text();
    templates.render(
        STAGE1,
        &[
            ("tools", &tools),
            ("metadata", &ctx.metadata_text()),
            ("history", &ctx.history),
            ("previous_actions", previous.trim_end()),
            ("question", &ctx.question),
        ],
    )
}

pub fn build_stage2_prompt(decision: &str, ctx: &PlannerContext) -> String {
    try_stage2(ctx.templates, decision, ctx).expect("built-in stage2 template renders")
}

fn try_stage2(
    templates: &PromptTemplates,
    decision: &str,
    ctx: &PlannerContext,
) -> Result<String, PromptError> {
    let tools = render_task_section(ctx.registry.specs().map(render_task_full));
    templates.render(
        STAGE2,
        &[
            ("decision", decision),
            ("tools", &tools),
            ("question", &ctx.question),
        ],
    )
}

/// Text after the last `Decision:` marker, trimmed.
pub fn extract_decision(stage1_output: &str) -> Result<String, PlannerError> {
    stage1_output
        .rfind(DECISION_MARKER)
        .map(|i| stage1_output[i + DECISION_MARKER.len()..].trim().to_string())
        .ok_or(PlannerError::MissingDecisionMarker)
}

/// When the strategy reply declares the gathered information sufficient,
/// returns the text following the finish marker. Only a marker at the start
/// of a line after the last decision counts, so a quoted marker inside the
/// reasoning does not end planning.
pub fn finish_directive(stage1_output: &str) -> Option<String> {
    let tail = match stage1_output.rfind(DECISION_MARKER) {
        Some(i) => &stage1_output[i..],
        None => stage1_output,
    };
    let mut offset = 0;
    for line in tail.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with(FINISH_MARKER) {
            let start = offset + (line.len() - trimmed.len()) + FINISH_MARKER.len();
            return Some(tail[start..].trim().to_string());
        }
        offset += line.len();
    }
    None
}

fn complete(
    llm: &dyn LlmBackend,
    params: &LlmParams,
    stage: &str,
    messages: &[ChatMessage],
    exchanges: &mut Vec<PromptExchange>,
) -> Result<String, PlannerFailure> {
    let prompt = messages.last().map(|m| m.content.clone()).unwrap_or_default();
    match llm.complete(messages, params) {
        Ok(reply) => {
            exchanges.push(PromptExchange {
                stage: stage.to_string(),
                prompt,
                response: reply.clone(),
            });
            Ok(reply)
        }
        Err(e) => Err(PlannerFailure::new(e, std::mem::take(exchanges))),
    }
}

fn plan_from_reply(reply: &str, ctx: &PlannerContext) -> Result<ValidatedPlan, PlanError> {
    let code = extract_code_block(reply, "python")?;
    let plan = parse_plan(&code)?;
    if plan.is_empty() {
        return Err(PlanError::EmptyBlock);
    }
    validate_plan(plan, ctx.registry)
}

/// One planner consultation. Allows a single repair exchange when the
/// generated code does not parse or validate.
pub fn plan_turn(
    ctx: &PlannerContext,
    llm: &dyn LlmBackend,
    params: &LlmParams,
) -> Result<PlannerOutcome, PlannerFailure> {
    let mut exchanges = Vec::new();
    let stage1_prompt =
        try_stage1(ctx.templates, ctx).map_err(|e| PlannerFailure::new(e, vec![]))?;
    let raw_stage1 = complete(
        llm,
        params,
        "stage1",
        &[ChatMessage::user(stage1_prompt)],
        &mut exchanges,
    )?;
    if let Some(directive) = finish_directive(&raw_stage1) {
        return Ok(PlannerOutcome {
            kind: PlannerOutcomeKind::Finished { directive },
            raw_stage1,
            raw_stage2: None,
            exchanges,
        });
    }
    let decision = match extract_decision(&raw_stage1) {
        Ok(d) => d,
        Err(e) => return Err(PlannerFailure::new(e, exchanges)),
    };
    let stage2_prompt = try_stage2(ctx.templates, &decision, ctx)
        .map_err(|e| PlannerFailure::new(e, exchanges.clone()))?;
    let mut messages = vec![ChatMessage::user(stage2_prompt)];
    let mut reply = complete(llm, params, "stage2", &messages, &mut exchanges)?;
    let plan = match plan_from_reply(&reply, ctx) {
        Ok(plan) => plan,
        Err(first) => {
            tracing::warn!(error = %first, "plan rejected, asking for a repair");
            let repair = ctx
                .templates
                .render(REPAIR, &[("error", &first.to_string())])
                .map_err(|e| PlannerFailure::new(e, exchanges.clone()))?;
            messages.push(ChatMessage::assistant(reply));
            messages.push(ChatMessage::user(repair));
            reply = complete(llm, params, "repair", &messages, &mut exchanges)?;
            plan_from_reply(&reply, ctx).map_err(|e| {
                PlannerFailure::new(PlannerError::PlanParseFailed(e), exchanges.clone())
            })?
        }
    };
    Ok(PlannerOutcome {
        kind: PlannerOutcomeKind::PlanProduced { plan, decision },
        raw_stage1,
        raw_stage2: Some(reply),
        exchanges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_after_last_marker() {
        assert_eq!(
            extract_decision("I must start with 'Decision:' later.\nDecision:\n  go left \n").unwrap(),
            "go left"
        );
        assert_eq!(
            extract_decision("no marker"),
            Err(PlannerError::MissingDecisionMarker)
        );
    }

    #[test]
    fn finish_marker_rules() {
        assert_eq!(
            finish_directive("Final Answer: the page lists six tips").as_deref(),
            Some("the page lists six tips")
        );
        assert_eq!(
            finish_directive("Thoughts.\nDecision: enough\n  Final Answer: done\nmore").as_deref(),
            Some("done\nmore")
        );
        // A marker quoted before the decision does not end planning.
        assert_eq!(
            finish_directive("If done I write Final Answer: x\nDecision: search"),
            None
        );
        assert_eq!(finish_directive("Decision: say Final Answer: inline"), None);
    }
}
