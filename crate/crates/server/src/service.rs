//! Session store and the turn entry point shared by HTTP and CLI.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use cha_core::engine::{Engine, EngineError, TurnRequest, TurnResult};
use cha_core::session::{MetadataItem, Session};
use cha_core::value::{Blob, Payload};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session {0} is already running a turn")]
    EngineBusy(Uuid),
    #[error("unknown session {0}")]
    UnknownSession(Uuid),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("session storage failed: {0}")]
    Storage(String),
}

type Shared = Arc<Mutex<Session>>;

/// Sessions by id, each behind its own lock so turns on different sessions
/// run in parallel. Optionally mirrored to `<dir>/<id>.json`.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<Uuid, Shared>>,
    dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Store backed by `dir`, loading every session already saved there.
    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::Storage(e.to_string()))?;
        let mut sessions = HashMap::new();
        let entries = std::fs::read_dir(&dir).map_err(|e| ServiceError::Storage(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| ServiceError::Storage(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(|e| ServiceError::Storage(e.to_string()))?;
            let session: Session = serde_json::from_slice(&bytes)
                .map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))?;
            sessions.insert(session.session_id, Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            sessions: RwLock::new(sessions),
            dir: Some(dir),
        })
    }

    pub fn create(&self) -> Result<Uuid, ServiceError> {
        let id = Uuid::new_v4();
        self.get_or_create(id)?;
        Ok(id)
    }

    pub fn get(&self, id: Uuid) -> Option<Shared> {
        self.sessions.read().expect("session map").get(&id).cloned()
    }

    pub fn get_or_create(&self, id: Uuid) -> Result<Shared, ServiceError> {
        if let Some(s) = self.get(id) {
            return Ok(s);
        }
        let shared = {
            let mut map = self.sessions.write().expect("session map");
            map.entry(id)
                .or_insert_with(|| Arc::new(Mutex::new(Session::new(id))))
                .clone()
        };
        self.save(&lock(&shared))?;
        Ok(shared)
    }

    pub fn ids(&self) -> Vec<Uuid> {
        let mut ids: Vec<Uuid> = self.sessions.read().expect("session map").keys().copied().collect();
        ids.sort();
        ids
    }

    /// Copy of a session's current state. Waits for a running turn.
    pub fn snapshot(&self, id: Uuid) -> Option<Session> {
        self.get(id).map(|s| lock(&s).clone())
    }

    pub fn save(&self, session: &Session) -> Result<(), ServiceError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let bytes =
            serde_json::to_vec_pretty(session).map_err(|e| ServiceError::Storage(e.to_string()))?;
        let path = dir.join(format!("{}.json", session.session_id));
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, bytes)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| ServiceError::Storage(e.to_string()))
    }
}

fn lock(s: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

/// Hex SHA-256 of the serialized history, stable across save and reload.
pub fn history_hash(session: &Session) -> String {
    let bytes = serde_json::to_vec(&session.history).expect("history serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Engine plus sessions: everything a front end needs.
#[derive(Debug)]
pub struct Service {
    pub engine: Engine,
    pub store: SessionStore,
    uploads: Mutex<HashMap<String, MetadataItem>>,
}

impl Service {
    pub fn new(engine: Engine, store: SessionStore) -> Self {
        Self {
            engine,
            store,
            uploads: Mutex::new(HashMap::new()),
        }
    }

    /// Stores an uploaded file in the data pipe and returns its reference.
    pub fn upload(&self, bytes: Vec<u8>, media_type: &str, caption: &str) -> Result<String, ServiceError> {
        let reference = self
            .engine
            .pipe
            .store(
                Payload::Blob(Blob {
                    media_type: media_type.to_string(),
                    bytes,
                }),
                "upload",
            )
            .map_err(|e| ServiceError::Storage(e.to_string()))?;
        let item = MetadataItem {
            reference: reference.clone(),
            kind: MetadataItem::kind_for_media_type(media_type).to_string(),
            media_type: media_type.to_string(),
            caption: caption.trim().to_string(),
        };
        self.uploads.lock().expect("uploads").insert(reference.clone(), item);
        Ok(reference)
    }

    /// Runs one turn. A second turn on a session that is still busy fails
    /// with `EngineBusy` instead of waiting.
    pub fn respond(&self, session_id: Uuid, request: &TurnRequest) -> Result<TurnResult, ServiceError> {
        let shared = self.store.get_or_create(session_id)?;
        let mut session = match shared.try_lock() {
            Ok(guard) => guard,
            Err(TryLockError::WouldBlock) => return Err(ServiceError::EngineBusy(session_id)),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        {
            let uploads = self.uploads.lock().expect("uploads");
            for reference in &request.metadata {
                if let Some(item) = uploads.get(reference) {
                    session.add_metadata(item.clone());
                }
            }
        }
        let result = self.engine.orchestrate_turn(&mut session, request)?;
        self.store.save(&session)?;
        Ok(result)
    }
}
