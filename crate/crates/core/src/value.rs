//! Payloads exchanged between tasks, and their prompt rendering.
//!
//! Planner-facing text uses Python literal notation (`{'url': '...'}`,
//! `['a', 'b']`) because the planner emits Python-shaped plan code and the
//! previous-action blocks are read back by the same model.

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Opaque binary content such as an uploaded image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blob {
    pub media_type: String,
    #[serde(with = "b64")]
    pub bytes: Vec<u8>,
}

/// A value stored in the data pipe or produced by a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Payload {
    Value(Value),
    Blob(Blob),
}

impl Payload {
    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Payload::Value(v) => Some(v),
            Payload::Blob(_) => None,
        }
    }

    /// Text used when the payload is shown to a model.
    pub fn to_prompt_text(&self) -> String {
        match self {
            Payload::Value(v) => prompt_text(v),
            Payload::Blob(b) => format!("<{} bytes of {}>", b.bytes.len(), b.media_type),
        }
    }
}

impl From<Value> for Payload {
    fn from(v: Value) -> Self {
        Payload::Value(v)
    }
}

/// One positional argument handed to a task body.
#[derive(Debug, Clone, PartialEq)]
pub enum Argument {
    Text(String),
    Payload(Payload),
}

impl Argument {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Argument::Text(s) => Some(s),
            Argument::Payload(Payload::Value(Value::String(s))) => Some(s),
            Argument::Payload(_) => None,
        }
    }

    /// Structured view of the argument. Text that parses as JSON is accepted
    /// so models can pass small literal lists inline.
    pub fn to_value(&self) -> Option<Value> {
        match self {
            Argument::Text(s) => serde_json::from_str(s).ok(),
            Argument::Payload(Payload::Value(v)) => Some(v.clone()),
            Argument::Payload(Payload::Blob(_)) => None,
        }
    }
}

/// Top-level strings are emitted raw, everything else in Python literal form.
pub fn prompt_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => py_repr(other),
    }
}

pub fn py_repr(v: &Value) -> String {
    let mut out = String::new();
    write_repr(v, &mut out);
    out
}

pub fn py_str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Renders a list of strings the way Python prints `list[str]`.
pub fn py_list_repr<S: AsRef<str>>(items: &[S]) -> String {
    let inner: Vec<String> = items.iter().map(|s| py_str_repr(s.as_ref())).collect();
    format!("[{}]", inner.join(", "))
}

fn write_repr(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("None"),
        Value::Bool(true) => out.push_str("True"),
        Value::Bool(false) => out.push_str("False"),
        Value::Number(n) => out.push_str(&n.to_string()),
        Value::String(s) => out.push_str(&py_str_repr(s)),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_repr(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&py_str_repr(k));
                out.push_str(": ");
                write_repr(item, out);
            }
            out.push('}');
        }
    }
}

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dict_renders_like_python() {
        let v = json!({"url": "http://google.com"});
        assert_eq!(py_repr(&v), "{'url': 'http://google.com'}");
    }

    #[test]
    fn list_of_strings() {
        assert_eq!(
            py_list_repr(&["tips to improve sleep"]),
            "['tips to improve sleep']"
        );
        assert_eq!(py_list_repr::<&str>(&[]), "[]");
    }

    #[test]
    fn quote_selection_follows_python() {
        assert_eq!(py_str_repr("it's"), "\"it's\"");
        assert_eq!(py_str_repr("a'b\"c"), "'a\\'b\"c'");
    }

    #[test]
    fn scalars() {
        assert_eq!(py_repr(&json!([1, 2.5, true, null])), "[1, 2.5, True, None]");
        assert_eq!(prompt_text(&json!("raw text")), "raw text");
    }

    #[test]
    fn blob_survives_serde() {
        let p = Payload::Blob(Blob {
            media_type: "image/png".into(),
            bytes: vec![0, 1, 2, 255],
        });
        let text = serde_json::to_string(&p).unwrap();
        let back: Payload = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
    }
}
