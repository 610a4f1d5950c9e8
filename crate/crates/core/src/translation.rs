//! Language detection and query/answer translation.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Languages the engine accepts. English is always present.
pub const SUPPORTED_LANGUAGES: &[&str] = &["en", "es"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn parse(code: &str) -> Result<Self, TranslationError> {
        let code = code.trim().to_ascii_lowercase();
        if SUPPORTED_LANGUAGES.contains(&code.as_str()) {
            Ok(Self(code))
        } else {
            Err(TranslationError::Unsupported(code))
        }
    }

    pub fn english() -> Self {
        Self("en".into())
    }

    pub fn spanish() -> Self {
        Self("es".into())
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for LanguageTag {
    type Error = TranslationError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<LanguageTag> for String {
    fn from(t: LanguageTag) -> String {
        t.0
    }
}

/// `retain` plans in the user's language; `translate` plans in English and
/// translates the answer back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LangMode {
    Retain,
    #[default]
    Translate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslationError {
    #[error("unsupported language `{0}`")]
    Unsupported(String),
    #[error("cannot detect the language of empty text")]
    EmptyText,
    #[error("no dictionary entry for `{0}`")]
    UnknownPhrase(String),
    #[error("translation service returned {status}: {body}")]
    RemoteError { status: u16, body: String },
    #[error("translation transport error: {0}")]
    Transport(String),
    #[error("cannot load dictionary: {0}")]
    Dictionary(String),
}

const SPANISH_WORDS: &[&str] = &[
    "el", "la", "los", "las", "de", "del", "que", "y", "en", "un", "una", "por", "para", "con",
    "es", "mi", "cuál", "cual", "cómo", "como", "qué", "nivel", "paciente", "agosto", "dormir",
    "sueño", "estrés", "hola", "gracias", "cuáles", "está", "son", "al", "lo", "se",
];

const ENGLISH_WORDS: &[&str] = &[
    "the", "is", "of", "and", "to", "in", "my", "how", "what", "on", "for", "with", "a", "an",
    "patient", "level", "sleep", "stress", "during", "improve", "hello", "are", "which", "name",
];

/// Stopword and character heuristic. Falls back to English on ties.
pub fn detect_language(text: &str) -> Result<LanguageTag, TranslationError> {
    if text.trim().is_empty() {
        return Err(TranslationError::EmptyText);
    }
    let lower = text.to_lowercase();
    let mut es = lower
        .chars()
        .filter(|c| matches!(c, '¿' | '¡' | 'ñ' | 'á' | 'é' | 'í' | 'ó' | 'ú'))
        .count() as i32
        * 2;
    let mut en = 0i32;
    for word in lower.split(|c: char| !c.is_alphanumeric()) {
        if word.is_empty() {
            continue;
        }
        if SPANISH_WORDS.contains(&word) {
            es += 1;
        }
        if ENGLISH_WORDS.contains(&word) {
            en += 1;
        }
    }
    Ok(if es > en {
        LanguageTag::spanish()
    } else {
        LanguageTag::english()
    })
}

pub trait TranslationClient: Send + Sync {
    /// Translates between two distinct languages.
    fn translate_text(
        &self,
        text: &str,
        src: &LanguageTag,
        dst: &LanguageTag,
    ) -> Result<String, TranslationError>;

    /// Number of translation requests served so far.
    fn calls(&self) -> usize;
}

/// Identity when `src == dst`, otherwise delegates to the client.
pub fn translate(
    text: &str,
    src: &LanguageTag,
    dst: &LanguageTag,
    client: &dyn TranslationClient,
) -> Result<String, TranslationError> {
    if src == dst {
        return Ok(text.to_string());
    }
    client.translate_text(text, src, dst)
}

/// Offline translator backed by a phrase table. Each line of the table is
/// `<language>\t<phrase>\t<language>\t<phrase>`; pairs work in both
/// directions. Lines starting with `#` are ignored.
#[derive(Debug, Default)]
pub struct StubDictionary {
    table: HashMap<(String, String, String), String>,
    calls: AtomicUsize,
}

fn normalize(phrase: &str) -> String {
    phrase.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl StubDictionary {
    pub fn parse(text: &str) -> Result<Self, TranslationError> {
        let mut dict = Self::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(TranslationError::Dictionary(format!(
                    "line {}: expected 4 tab-separated columns",
                    n + 1
                )));
            }
            let a = LanguageTag::parse(cols[0])?;
            let b = LanguageTag::parse(cols[2])?;
            dict.insert(&a, cols[1], &b, cols[3]);
        }
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self, TranslationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TranslationError::Dictionary(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, a: &LanguageTag, phrase_a: &str, b: &LanguageTag, phrase_b: &str) {
        self.table.insert(
            (a.code().into(), b.code().into(), normalize(phrase_a)),
            phrase_b.to_string(),
        );
        self.table.insert(
            (b.code().into(), a.code().into(), normalize(phrase_b)),
            phrase_a.to_string(),
        );
    }
}

impl TranslationClient for StubDictionary {
    fn translate_text(
        &self,
        text: &str,
        src: &LanguageTag,
        dst: &LanguageTag,
    ) -> Result<String, TranslationError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.table
            .get(&(src.code().into(), dst.code().into(), normalize(text)))
            .cloned()
            .ok_or_else(|| TranslationError::UnknownPhrase(text.to_string()))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Client for a JSON translation endpoint accepting `{q, source, target}`
/// and answering `{translatedText}`.
pub struct RemoteTranslator {
    agent: ureq::Agent,
    url: String,
    calls: AtomicUsize,
}

impl RemoteTranslator {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            url: url.into(),
            calls: AtomicUsize::new(0),
        }
    }
}

#[derive(Deserialize)]
struct RemoteReply {
    #[serde(rename = "translatedText")]
    translated_text: String,
}

impl TranslationClient for RemoteTranslator {
    fn translate_text(
        &self,
        text: &str,
        src: &LanguageTag,
        dst: &LanguageTag,
    ) -> Result<String, TranslationError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = serde_json::json!({"q": text, "source": src.code(), "target": dst.code()});
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| TranslationError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TranslationError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TranslationError::RemoteError {
                status,
                body: text.chars().take(200).collect(),
            });
        }
        serde_json::from_str::<RemoteReply>(&text)
            .map(|r| r.translated_text)
            .map_err(|e| TranslationError::Transport(format!("malformed reply: {e}")))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict() -> StubDictionary {
        StubDictionary::parse("# test\nen\thello\tes\thola\nen\tgood night\tes\tbuenas noches\n")
            .unwrap()
    }

    #[test]
    fn detects_english_and_spanish() {
        assert_eq!(
            detect_language("How to improve my sleep?").unwrap(),
            LanguageTag::english()
        );
        assert_eq!(
            detect_language("¿Cuál es el nivel de estrés del paciente 5 el 29 de agosto de 2020?")
                .unwrap(),
            LanguageTag::spanish()
        );
        assert_eq!(detect_language("  "), Err(TranslationError::EmptyText));
    }

    #[test]
    fn unsupported_tag_rejected() {
        assert_eq!(
            LanguageTag::parse("xx"),
            Err(TranslationError::Unsupported("xx".into()))
        );
        assert!(serde_json::from_str::<LanguageTag>("\"xx\"").is_err());
        assert_eq!(
            serde_json::from_str::<LanguageTag>("\"ES\"").unwrap(),
            LanguageTag::spanish()
        );
    }

    #[test]
    fn dictionary_both_directions() {
        let d = dict();
        let (en, es) = (LanguageTag::english(), LanguageTag::spanish());
        assert_eq!(translate("hola", &es, &en, &d).unwrap(), "hello");
        assert_eq!(translate("good  night", &en, &es, &d).unwrap(), "buenas noches");
        assert_eq!(
            translate("adiós", &es, &en, &d),
            Err(TranslationError::UnknownPhrase("adiós".into()))
        );
        assert_eq!(d.calls(), 3);
    }

    #[test]
    fn same_language_makes_no_call() {
        let d = dict();
        let es = LanguageTag::spanish();
        assert_eq!(translate("cualquier cosa", &es, &es, &d).unwrap(), "cualquier cosa");
        assert_eq!(d.calls(), 0);
    }

    #[test]
    fn malformed_dictionary_line() {
        assert!(matches!(
            StubDictionary::parse("en\thello\tes"),
            Err(TranslationError::Dictionary(_))
        ));
    }
}
