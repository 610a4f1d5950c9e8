use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_messages, ChatMessage, LlmBackend, LlmError, LlmParams};

pub const API_KEY_ENV: &str = "CHA_LLM_API_KEY";
pub const BASE_URL_ENV: &str = "CHA_LLM_BASE_URL";

/// Endpoint settings for a chat-completions style HTTP service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub path: String,
    pub auth_header: String,
    /// Prepended to the key in the auth header, e.g. `"Bearer "`.
    pub auth_prefix: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    /// Extra attempts after the first, for timeouts, 429 and 5xx only.
    pub max_retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000".into(),
            path: "/v1/chat/completions".into(),
            auth_header: "Authorization".into(),
            auth_prefix: "Bearer ".into(),
            api_key: None,
            timeout_secs: 60,
            max_retries: 2,
        }
    }
}

impl RemoteConfig {
    /// Applies `CHA_LLM_API_KEY` and `CHA_LLM_BASE_URL` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            self.api_key = Some(key);
        }
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            self.base_url = url;
        }
        self
    }

    fn url(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.path.trim_start_matches('/')
        )
    }
}

pub struct RemoteBackend {
    agent: ureq::Agent,
    config: RemoteConfig,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("url", &self.config.url())
            .finish()
    }
}

enum Attempt {
    Done(String),
    Retry(LlmError),
    Fail(LlmError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Self { agent, config }
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut request = self.agent.post(self.config.url());
        if let Some(key) = &self.config.api_key {
            request = request.header(
                self.config.auth_header.as_str(),
                format!("{}{}", self.config.auth_prefix, key),
            );
        }
        let mut response = match request.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(LlmError::Timeout),
            Err(e @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed)) => {
                return Attempt::Retry(LlmError::Transport(e.to_string()))
            }
            Err(e) => return Attempt::Fail(LlmError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(LlmError::Timeout),
            Err(e) => return Attempt::Fail(LlmError::Transport(e.to_string())),
        };
        if !(200..300).contains(&status) {
            let err = LlmError::RemoteError {
                status,
                body: text.chars().take(200).collect(),
            };
            return if status == 429 || status >= 500 {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        match parse_completion(&text) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fail(e),
        }
    }
}

fn parse_completion(text: &str) -> Result<String, LlmError> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| LlmError::InvalidResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::InvalidResponse("missing choices[0].message.content".into()))
}

impl LlmBackend for RemoteBackend {
    fn complete(&self, messages: &[ChatMessage], params: &LlmParams) -> Result<String, LlmError> {
        check_messages(messages)?;
        let mut body = json!({
            "model": params.model,
            "messages": messages,
            "temperature": params.temperature,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let mut last = LlmError::Timeout;
        for attempt in 0..=self.config.max_retries {
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(attempt, error = %e, "chat completion failed, retrying");
                    last = e;
                }
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Minimal loopback HTTP server answering each connection from `replies`
    /// (status, body) in order, repeating the last one.
    fn stub(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, Arc<std::sync::Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(std::sync::Mutex::new(Vec::new()));
        let (h, b) = (hits.clone(), bodies.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let n = h.fetch_add(1, Ordering::SeqCst);
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let read = stream.read(&mut chunk).unwrap_or(0);
                    if read == 0 {
                        break;
                    }
                    buf.extend_from_slice(&chunk[..read]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(idx) = text.find("\r\n\r\n") {
                        let len = text[..idx]
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap_or(0))
                            })
                            .unwrap_or(0);
                        if buf.len() >= idx + 4 + len {
                            b.lock().unwrap().push(text[idx + 4..].to_string());
                            break;
                        }
                    }
                }
                let (status, body) = replies[n.min(replies.len() - 1)].clone();
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        (format!("http://{addr}"), hits, bodies)
    }

    fn completion(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn backend(url: String) -> RemoteBackend {
        RemoteBackend::new(RemoteConfig {
            base_url: url,
            api_key: Some("k".into()),
            timeout_secs: 5,
            ..RemoteConfig::default()
        })
    }

    #[test]
    fn returns_canned_body() {
        let (url, hits, bodies) = stub(vec![(200, completion("canned answer"))]);
        let out = backend(url)
            .complete(&[ChatMessage::user("hi")], &LlmParams::planner_default())
            .unwrap();
        assert_eq!(out, "canned answer");
        assert_eq!(hits.load(Ordering::SeqCst), 1);
        let sent: Value = serde_json::from_str(&bodies.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["messages"][0], json!({"role": "user", "content": "hi"}));
    }

    #[test]
    fn retries_server_errors_within_budget() {
        let (url, hits, _) = stub(vec![(500, "boom".into())]);
        let err = backend(url)
            .complete(&[ChatMessage::user("hi")], &LlmParams::planner_default())
            .unwrap_err();
        assert_eq!(
            err,
            LlmError::RemoteError {
                status: 500,
                body: "boom".into()
            }
        );
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn recovers_after_transient_failure() {
        let (url, hits, _) = stub(vec![(503, "busy".into()), (200, completion("ok"))]);
        let out = backend(url)
            .complete(&[ChatMessage::user("hi")], &LlmParams::planner_default())
            .unwrap();
        assert_eq!(out, "ok");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, hits, _) = stub(vec![(401, "no key".into())]);
        let err = backend(url)
            .complete(&[ChatMessage::user("hi")], &LlmParams::planner_default())
            .unwrap_err();
        assert!(matches!(err, LlmError::RemoteError { status: 401, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }
}
