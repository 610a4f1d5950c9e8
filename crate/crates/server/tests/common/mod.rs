//! A live server on an ephemeral port and a small JSON client for it.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use cha_server::{api, EngineConfig, Service};
use serde::de::DeserializeOwned;
use serde_json::Value;
use tokio::sync::oneshot;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn config(name: &str) -> EngineConfig {
    let mut config = EngineConfig::load(&root().join("config").join(name)).unwrap();
    config.server.state_dir = None;
    config.server.auth_token = None;
    config
}

pub struct TestServer {
    pub base: String,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
    agent: ureq::Agent,
}

impl TestServer {
    pub fn start(service: Arc<Service>) -> Self {
        Self::start_with_token(service, None)
    }

    pub fn start_with_token(service: Arc<Service>, token: Option<String>) -> Self {
        let (addr_tx, addr_rx) = mpsc::channel();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = api::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(api::local_addr(&listener).unwrap()).unwrap();
                api::serve(listener, api::router(service, token), async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: format!("http://{addr}"),
            stop: Some(stop_tx),
            thread: Some(thread),
            agent,
        }
    }

    pub fn from_config(config: &EngineConfig) -> Self {
        Self::start(cha_server::service_from(config).unwrap())
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .send_json(body)
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.body_mut().read_json().unwrap_or(Value::Null))
    }

    pub fn post_bytes(&self, path: &str, content_type: &str, bytes: &[u8]) -> (u16, Value) {
        let mut resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", content_type)
            .send(bytes)
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.body_mut().read_json().unwrap_or(Value::Null))
    }

    pub fn post_with_header(&self, path: &str, header: (&str, &str), body: &Value) -> u16 {
        self.agent
            .post(format!("{}{path}", self.base))
            .header(header.0, header.1)
            .send_json(body)
            .unwrap()
            .status()
            .as_u16()
    }

    pub fn get_as<T: DeserializeOwned>(&self, path: &str) -> T {
        let (status, body) = self.get(path);
        assert_eq!(status, 200, "{path}: {body}");
        serde_json::from_value(body).unwrap()
    }

    pub fn new_session(&self) -> String {
        let (status, body) = self.post("/api/sessions", &Value::Null);
        assert_eq!(status, 200, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
