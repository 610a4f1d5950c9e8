//! Provider-neutral chat completion interface.

mod remote;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::{
    prompt_hash, Exchange, FixtureEntry, FixtureError, Matcher, ScriptedBackend, ScriptedFixture,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    if messages.is_empty() {
        return Err(LlmError::InvalidMessage("no messages".into()));
    }
    for (i, m) in messages.iter().enumerate() {
        if m.role != Role::System && m.content.trim().is_empty() {
            return Err(LlmError::InvalidMessage(format!("message {i} is empty")));
        }
    }
    Ok(())
}

/// Text a scripted matcher sees: every message body, newline-joined.
pub fn transcript_text(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmParams {
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

impl LlmParams {
    pub fn planner_default() -> Self {
        Self {
            model: String::new(),
            temperature: 0.0,
            max_tokens: None,
        }
    }

    pub fn responder_default() -> Self {
        Self {
            model: String::new(),
            temperature: 0.7,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("no fixture entry matches call {call_index}: {excerpt}")]
    NoFixtureMatch { call_index: usize, excerpt: String },
    #[error("remote backend returned {status}: {body}")]
    RemoteError { status: u16, body: String },
    #[error("remote backend timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    InvalidResponse(String),
    #[error("invalid request: {0}")]
    InvalidMessage(String),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], params: &LlmParams) -> Result<String, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<T> {
    fn complete(&self, messages: &[ChatMessage], params: &LlmParams) -> Result<String, LlmError> {
        (**self).complete(messages, params)
    }
}
