//! HTTP service, replay harness and CLI support around the cha engine.

pub mod api;
pub mod config;
pub mod replay;
pub mod service;

use std::sync::Arc;

pub use api::{router, ServeError};
pub use config::{ConfigError, EngineConfig};
pub use service::{history_hash, Service, ServiceError, SessionStore};

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// Engine and session store as the config describes them.
pub fn service_from(config: &EngineConfig) -> Result<Arc<Service>, StartupError> {
    let engine = config.build_engine()?;
    let store = match &config.server.state_dir {
        Some(dir) => SessionStore::persistent(dir.join("sessions"))?,
        None => SessionStore::in_memory(),
    };
    Ok(Arc::new(Service::new(engine, store)))
}
