//! Named prompt templates with `{{placeholder}}` slots.
//!
//! Substitution is a single left-to-right pass, so text spliced into a
//! slot is never scanned for further placeholders. Deployments can replace
//! any template through [`PromptTemplates::set_override`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use thiserror::Error;

pub const STAGE1: &str = "stage1";
pub const STAGE2: &str = "stage2";
pub const REPAIR: &str = "repair";
pub const THINKER: &str = "thinker";
pub const REACT: &str = "react";

const BUILTIN: &[(&str, &str)] = &[
    (STAGE1, include_str!("../templates/stage1.txt")),
    (STAGE2, include_str!("../templates/stage2.txt")),
    (REPAIR, include_str!("../templates/repair.txt")),
    (THINKER, include_str!("../templates/thinker.txt")),
    (REACT, include_str!("../templates/react.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` has no value for `{name}`")]
    MissingValue { template: String, name: String },
    #[error("template `{template}` uses unsupported placeholder `{name}`")]
    UnsupportedPlaceholder { template: String, name: String },
    #[error("template `{template}` has an unterminated placeholder")]
    Unterminated { template: String },
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces<'a>(template_name: &str, text: &'a str) -> Result<Vec<Piece<'a>>, PromptError> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            return Err(PromptError::Unterminated {
                template: template_name.to_string(),
            });
        };
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            // Not a slot: keep the braces as literal text.
            out.push(Piece::Text(&rest[..start + 2]));
            rest = after;
            continue;
        }
        out.push(Piece::Text(&rest[..start]));
        out.push(Piece::Slot(name));
        rest = &after[end + 2..];
    }
    out.push(Piece::Text(rest));
    Ok(out)
}

/// Placeholder names used by a template text.
pub fn placeholders(text: &str) -> Result<BTreeSet<String>, PromptError> {
    Ok(pieces("", text)?
        .into_iter()
        .filter_map(|p| match p {
            Piece::Slot(s) => Some(s.to_string()),
            Piece::Text(_) => None,
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct PromptTemplates {
    templates: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            templates: BUILTIN
                .iter()
                .map(|(name, text)| {
                    let text = text.strip_suffix('\n').unwrap_or(text);
                    (name.to_string(), text.to_string())
                })
                .collect(),
        }
    }
}

impl PromptTemplates {
    /// Shared copy of the built-in templates.
    pub fn builtin() -> &'static PromptTemplates {
        static BUILTIN_SET: OnceLock<PromptTemplates> = OnceLock::new();
        BUILTIN_SET.get_or_init(PromptTemplates::default)
    }

    pub fn get(&self, name: &str) -> Result<&str, PromptError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))
    }

    /// Replaces a built-in template. The replacement may only use slots the
    /// built-in version fills.
    pub fn set_override(&mut self, name: &str, text: &str) -> Result<(), PromptError> {
        let allowed = placeholders(self.get(name)?)?;
        for slot in placeholders(text)? {
            if !allowed.contains(&slot) {
                return Err(PromptError::UnsupportedPlaceholder {
                    template: name.to_string(),
                    name: slot,
                });
            }
        }
        self.templates.insert(name.to_string(), text.to_string());
        Ok(())
    }

    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let text = self.get(name)?;
        let mut out = String::with_capacity(text.len() + 256);
        for piece in pieces(name, text)? {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(slot) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| *k == slot)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::MissingValue {
                            template: name.to_string(),
                            name: slot.to_string(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_have_expected_slots() {
        let t = PromptTemplates::builtin();
        let slots = |n| placeholders(t.get(n).unwrap()).unwrap();
        assert_eq!(
            slots(STAGE1).into_iter().collect::<Vec<_>>(),
            ["history", "metadata", "previous_actions", "question", "tools"]
        );
        assert_eq!(
            slots(STAGE2).into_iter().collect::<Vec<_>>(),
            ["decision", "question", "tools"]
        );
        assert_eq!(
            slots(THINKER).into_iter().collect::<Vec<_>>(),
            ["actions", "history", "metadata", "prefix", "question"]
        );
    }

    #[test]
    fn substitution_is_single_pass() {
        let mut t = PromptTemplates::default();
        t.set_override(REPAIR, "error: {{error}}!").unwrap();
        assert_eq!(
            t.render(REPAIR, &[("error", "{{error}}")]).unwrap(),
            "error: {{error}}!"
        );
    }

    #[test]
    fn missing_value_reported() {
        assert_eq!(
            PromptTemplates::builtin().render(REPAIR, &[]),
            Err(PromptError::MissingValue {
                template: REPAIR.into(),
                name: "error".into()
            })
        );
    }

    #[test]
    fn override_cannot_invent_slots() {
        let mut t = PromptTemplates::default();
        assert!(matches!(
            t.set_override(THINKER, "{{secret}}"),
            Err(PromptError::UnsupportedPlaceholder { .. })
        ));
        assert!(matches!(
            t.set_override("nope", "x"),
            Err(PromptError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn json_braces_are_literal() {
        let mut t = PromptTemplates::default();
        t.set_override(REPAIR, "{{ not a slot }} {'a': {'b': 1}} {{error}}").unwrap();
        assert_eq!(
            t.render(REPAIR, &[("error", "E")]).unwrap(),
            "{{ not a slot }} {'a': {'b': 1}} E"
        );
    }
}
