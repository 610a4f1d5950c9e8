use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{check_messages, transcript_text, ChatMessage, LlmBackend, LlmError, LlmParams};

/// How a fixture entry recognises the call it answers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Matcher {
    /// Zero-based index of the call within the replay.
    TurnIndex(usize),
    PromptSubstring(String),
    /// [`prompt_hash`] of the whole prompt.
    PromptHash(u64),
}

impl Matcher {
    fn matches(&self, call_index: usize, prompt: &str) -> bool {
        match self {
            Matcher::TurnIndex(i) => *i == call_index,
            Matcher::PromptSubstring(s) => prompt.contains(s.as_str()),
            Matcher::PromptHash(h) => prompt_hash(prompt) == *h,
        }
    }
}

/// FNV-1a over the prompt with whitespace runs collapsed to one space.
pub fn prompt_hash(prompt: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let normalized = prompt.split_whitespace().collect::<Vec<_>>().join(" ");
    normalized.bytes().fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureEntry {
    pub matcher: Matcher,
    pub response: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {message}")]
    Io { path: String, message: String },
    #[error("fixture parse error: {0}")]
    ParseError(String),
    #[error("fixture entries {0:?} use identical matchers")]
    AmbiguousMatchers(Vec<usize>),
}

/// Ordered (matcher, response) pairs; the first matching entry wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedFixture {
    entries: Vec<FixtureEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    #[serde(default)]
    entry: Vec<RawEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEntry {
    match_kind: String,
    match_value: toml::Value,
    response: String,
}

impl ScriptedFixture {
    pub fn new(entries: Vec<FixtureEntry>) -> Result<Self, FixtureError> {
        for (i, a) in entries.iter().enumerate() {
            let dupes: Vec<usize> = entries
                .iter()
                .enumerate()
                .filter(|(_, b)| b.matcher == a.matcher)
                .map(|(j, _)| j)
                .collect();
            if dupes.len() > 1 && dupes[0] == i {
                return Err(FixtureError::AmbiguousMatchers(dupes));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }

    /// Parses the TOML fixture format:
    ///
    /// ```toml
    /// [[entry]]
    /// match_kind = "prompt_substring"   # or "turn_index", "prompt_hash"
    /// match_value = "suggest three creative strategies"
    /// response = "..."
    /// ```
    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let file: FixtureFile =
            toml::from_str(text).map_err(|e| FixtureError::ParseError(e.to_string()))?;
        if file.entry.is_empty() {
            return Err(FixtureError::ParseError("fixture has no entries".into()));
        }
        let entries = file
            .entry
            .into_iter()
            .enumerate()
            .map(|(i, raw)| {
                let bad = |what: &str| FixtureError::ParseError(format!("entry {i}: {what}"));
                let value_str = match &raw.match_value {
                    toml::Value::String(s) => s.clone(),
                    toml::Value::Integer(n) => n.to_string(),
                    _ => return Err(bad("match_value must be a string or integer")),
                };
                let matcher = match raw.match_kind.as_str() {
                    "turn_index" => Matcher::TurnIndex(
                        value_str.parse().map_err(|_| bad("turn_index must be a number"))?,
                    ),
                    "prompt_substring" => {
                        if value_str.is_empty() {
                            return Err(bad("empty substring"));
                        }
                        Matcher::PromptSubstring(value_str)
                    }
                    "prompt_hash" => Matcher::PromptHash(
                        u64::from_str_radix(value_str.trim_start_matches("0x"), 16)
                            .map_err(|_| bad("prompt_hash must be hex"))?,
                    ),
                    other => return Err(bad(&format!("unknown match_kind `{other}`"))),
                };
                Ok(FixtureEntry {
                    matcher,
                    response: raw.response,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(|e| FixtureError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        let file = FixtureFile {
            entry: self
                .entries
                .iter()
                .map(|e| {
                    let (kind, value) = match &e.matcher {
                        Matcher::TurnIndex(i) => ("turn_index", toml::Value::Integer(*i as i64)),
                        Matcher::PromptSubstring(s) => {
                            ("prompt_substring", toml::Value::String(s.clone()))
                        }
                        Matcher::PromptHash(h) => {
                            ("prompt_hash", toml::Value::String(format!("{h:016x}")))
                        }
                    };
                    RawEntry {
                        match_kind: kind.into(),
                        match_value: value,
                        response: e.response.clone(),
                    }
                })
                .collect(),
        };
        toml::to_string(&file).expect("fixture serializes")
    }

    fn find(&self, call_index: usize, prompt: &str) -> Option<&FixtureEntry> {
        self.entries
            .iter()
            .find(|e| e.matcher.matches(call_index, prompt))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub response: String,
}

/// Deterministic backend answering from a [`ScriptedFixture`].
#[derive(Debug)]
pub struct ScriptedBackend {
    fixture: ScriptedFixture,
    calls: AtomicUsize,
    log: Mutex<Vec<Exchange>>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptedFixture) -> Self {
        Self {
            fixture,
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("log lock").clone()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage], _params: &LlmParams) -> Result<String, LlmError> {
        check_messages(messages)?;
        let prompt = transcript_text(messages);
        let call_index = self.calls.fetch_add(1, Ordering::SeqCst);
        let entry = self.fixture.find(call_index, &prompt).ok_or_else(|| {
            LlmError::NoFixtureMatch {
                call_index,
                excerpt: prompt.chars().take(120).collect(),
            }
        })?;
        self.log.lock().expect("log lock").push(Exchange {
            prompt,
            response: entry.response.clone(),
        });
        Ok(entry.response.clone())
    }
}
