//! The responder prompt and answer post-processing.

use std::sync::OnceLock;

use regex::Regex;

use crate::datapipe::REFERENCE_PREFIX;
use crate::llm::{ChatMessage, LlmBackend, LlmError, LlmParams};
use crate::prompts::{PromptTemplates, THINKER};

/// Inputs to the responder prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ThinkerBundle {
    pub metadata: String,
    pub history: String,
    /// Rendered action blocks, see [`crate::executor::format_previous_actions`].
    pub actions: String,
    /// Deployment-specific instruction placed before the standard directive.
    pub prefix: Option<String>,
    pub question: String,
}

pub fn build_thinker_prompt(bundle: &ThinkerBundle) -> String {
    build_thinker_prompt_with(PromptTemplates::builtin(), bundle)
        .expect("built-in thinker template renders")
}

pub fn build_thinker_prompt_with(
    templates: &PromptTemplates,
    bundle: &ThinkerBundle,
) -> Result<String, crate::prompts::PromptError> {
    // The template supplies the period that closes the prefix.
    let prefix = bundle.prefix.as_deref().unwrap_or("").trim();
    let prefix = prefix.strip_suffix('.').unwrap_or(prefix);
    templates.render(
        THINKER,
        &[
            ("metadata", &bundle.metadata),
            ("history", &bundle.history),
            ("actions", &bundle.actions),
            ("prefix", prefix),
            ("question", &bundle.question),
        ],
    )
}

/// Asks the responder model for the final answer and sanitizes it.
pub fn generate_response(
    bundle: &ThinkerBundle,
    llm: &dyn LlmBackend,
    params: &LlmParams,
) -> Result<String, LlmError> {
    complete_answer(&build_thinker_prompt(bundle), llm, params).map(|(_, clean)| clean)
}

/// Sends an already built responder prompt. Returns the raw completion and
/// its sanitized form.
pub fn complete_answer(
    prompt: &str,
    llm: &dyn LlmBackend,
    params: &LlmParams,
) -> Result<(String, String), LlmError> {
    let raw = llm.complete(&[ChatMessage::user(prompt)], params)?;
    let clean = sanitize_answer(&raw);
    Ok((raw, clean))
}

fn key_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"['"`]?datapipe:[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}['"`]?"#,
        )
        .expect("key regex")
    })
}

fn address_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"address:\[[^\]]*\]").expect("address regex"))
}

fn strip_keys(text: &str) -> String {
    let cleaned = key_regex().replace_all(text, "");
    // Anything still carrying the prefix is a malformed key; drop the token.
    if cleaned.contains(REFERENCE_PREFIX) {
        cleaned
            .split_inclusive(char::is_whitespace)
            .filter(|tok| !tok.contains(REFERENCE_PREFIX))
            .collect()
    } else {
        cleaned.into_owned()
    }
}

/// Removes data pipe keys (and quotes hugging them) from an answer while
/// leaving `address:[...]` spans byte-identical.
pub fn sanitize_answer(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for span in address_regex().find_iter(text) {
        out.push_str(&strip_keys(&text[last..span.start()]));
        out.push_str(span.as_str());
        last = span.end();
    }
    out.push_str(&strip_keys(&text[last..]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_removed() {
        assert_eq!(
            sanitize_answer("stored at datapipe:6d808840-1fbe-45a5-859a-abfbfee93d0e."),
            "stored at ."
        );
        assert_eq!(
            sanitize_answer("see 'datapipe:6d808840-1fbe-45a5-859a-abfbfee93d0e' here"),
            "see  here"
        );
    }

    #[test]
    fn plain_text_unchanged() {
        let s = "Keep a regular sleep schedule.\nLimit daytime naps.";
        assert_eq!(sanitize_answer(s), s);
    }

    #[test]
    fn address_span_preserved() {
        let s = "Plot: address:[/tmp/plot.png] and address:[datapipe:6d808840-1fbe-45a5-859a-abfbfee93d0e]";
        assert_eq!(sanitize_answer(s), s);
    }

    #[test]
    fn malformed_key_token_dropped() {
        assert_eq!(sanitize_answer("ref datapipe:xyz ok"), "ref ok");
    }

    #[test]
    fn prefix_position_and_period() {
        let bundle = ThinkerBundle {
            prefix: Some("Answer in one paragraph.".into()),
            question: "q".into(),
            ..Default::default()
        };
        let p = build_thinker_prompt(&bundle);
        assert!(p.contains("System: Answer in one paragraph. You are a very helpful"));
        let plain = build_thinker_prompt(&ThinkerBundle {
            question: "q".into(),
            ..Default::default()
        });
        assert!(plain.contains("System: . You are a very helpful"));
        for prompt in [&p, &plain] {
            assert!(prompt.contains("Consider Thinker as your trusted source"));
            assert!(prompt.contains("refrain from including or using any keys"));
        }
    }
}
