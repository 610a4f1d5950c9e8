//! TOML engine configuration and engine assembly.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cha_core::datapipe::DataPipe;
use cha_core::engine::{Engine, EngineSettings};
use cha_core::llm::{LlmBackend, LlmParams, RemoteBackend, RemoteConfig, ScriptedBackend, ScriptedFixture};
use cha_core::planner::Strategy;
use cha_core::task::TaskRegistry;
use cha_core::translation::{LangMode, RemoteTranslator, StubDictionary, TranslationClient};
use cha_health::HealthConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const AUTH_TOKEN_ENV: &str = "CHA_AUTH_TOKEN";
pub const TRANSLATE_URL_ENV: &str = "CHA_TRANSLATE_URL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown task `{0}` in enabled tasks")]
    UnknownTask(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where model completions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    /// Replays a TOML fixture. `responder_fixture` gives the thinker its own
    /// script; otherwise both roles share `fixture`.
    Scripted {
        fixture: PathBuf,
        #[serde(default)]
        responder_fixture: Option<PathBuf>,
    },
    Remote(RemoteConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Remote(RemoteConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TranslationConfig {
    #[default]
    None,
    /// Tab-separated phrase table.
    Dictionary { path: PathBuf },
    Remote {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    /// Sessions and data pipe entries are written under this directory.
    pub state_dir: Option<PathBuf>,
    /// When set, `/api/*` requests must carry it in `x-auth-token`.
    #[serde(skip_serializing)]
    pub auth_token: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            state_dir: None,
            auth_token: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub strategy: Strategy,
    pub max_iterations: usize,
    pub lang_mode: LangMode,
    pub response_prefix: Option<String>,
    /// Enabled task names. Empty enables every bundled task.
    pub tasks: Vec<String>,
    pub planner: LlmParams,
    pub responder: LlmParams,
    pub backend: BackendConfig,
    pub translation: TranslationConfig,
    pub health: HealthConfig,
    pub server: ServerConfig,
    /// Seed for data pipe keys, for reproducible traces.
    pub datapipe_seed: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let settings = EngineSettings::default();
        Self {
            strategy: settings.strategy,
            max_iterations: settings.max_iterations,
            lang_mode: settings.lang_mode,
            response_prefix: settings.response_prefix,
            tasks: Vec::new(),
            planner: settings.planner_params,
            responder: settings.responder_params,
            backend: BackendConfig::default(),
            translation: TranslationConfig::None,
            health: HealthConfig::bundled(),
            server: ServerConfig::default(),
            datapipe_seed: None,
        }
    }
}

/// Planner and responder backends.
type Backends = (Arc<dyn LlmBackend>, Arc<dyn LlmBackend>);

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory, and environment overrides are applied.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase_paths(base);
        Ok(config.with_env_overrides())
    }

    pub fn rebase_paths(&mut self, base: &Path) {
        if let BackendConfig::Scripted {
            fixture,
            responder_fixture,
        } = &mut self.backend
        {
            rebase(base, fixture);
            if let Some(r) = responder_fixture {
                rebase(base, r);
            }
        }
        if let TranslationConfig::Dictionary { path } = &mut self.translation {
            rebase(base, path);
        }
        rebase(base, &mut self.health.data_dir);
        rebase(base, &mut self.health.www_dir);
        rebase(base, &mut self.health.search_map);
        if let Some(dir) = &mut self.server.state_dir {
            rebase(base, dir);
        }
    }

    /// Credentials and endpoints from the environment win over the file.
    pub fn with_env_overrides(mut self) -> Self {
        if let BackendConfig::Remote(remote) = self.backend {
            self.backend = BackendConfig::Remote(remote.with_env_overrides());
        }
        if let Ok(token) = std::env::var(AUTH_TOKEN_ENV) {
            self.server.auth_token = Some(token);
        }
        if let (Ok(url), TranslationConfig::Remote { url: current, .. }) =
            (std::env::var(TRANSLATE_URL_ENV), &mut self.translation)
        {
            *current = url;
        }
        self
    }

    pub fn settings(&self) -> EngineSettings {
        EngineSettings {
            strategy: self.strategy,
            max_iterations: self.max_iterations,
            lang_mode: self.lang_mode,
            response_prefix: self.response_prefix.clone(),
            planner_params: self.planner.clone(),
            responder_params: self.responder.clone(),
        }
    }

    /// The enabled tasks. Unknown names are reported by name.
    pub fn registry(&self) -> Result<TaskRegistry, ConfigError> {
        let catalog = cha_health::catalog(&self.health)
            .map_err(|e| ConfigError::Invalid(format!("health tasks: {e}")))?;
        let full = cha_health::registry_from(&catalog)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.tasks.is_empty() {
            return Ok(full);
        }
        if let Some(unknown) = self.tasks.iter().find(|t| !full.contains(t)) {
            return Err(ConfigError::UnknownTask(unknown.clone()));
        }
        let subset = full
            .subset(&self.tasks)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        subset
            .check_dependencies()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(subset)
    }

    pub fn pipe(&self) -> Result<DataPipe, ConfigError> {
        let pipe = match self.datapipe_seed {
            Some(seed) => DataPipe::seeded(seed),
            None => DataPipe::new(),
        };
        match &self.server.state_dir {
            Some(dir) => pipe
                .with_persistence(dir.join("datapipe"))
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(pipe),
        }
    }

    fn backends(&self) -> Result<Backends, ConfigError> {
        let scripted = |path: &Path| -> Result<Arc<dyn LlmBackend>, ConfigError> {
            let fixture =
                ScriptedFixture::load(path).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(Arc::new(ScriptedBackend::new(fixture)))
        };
        match &self.backend {
            BackendConfig::Scripted {
                fixture,
                responder_fixture,
            } => {
                let planner = scripted(fixture)?;
                let responder = match responder_fixture {
                    Some(path) => scripted(path)?,
                    None => planner.clone(),
                };
                Ok((planner, responder))
            }
            BackendConfig::Remote(remote) => {
                let backend: Arc<dyn LlmBackend> = Arc::new(RemoteBackend::new(remote.clone()));
                Ok((backend.clone(), backend))
            }
        }
    }

    pub fn translator(&self) -> Result<Option<Arc<dyn TranslationClient>>, ConfigError> {
        Ok(match &self.translation {
            TranslationConfig::None => None,
            TranslationConfig::Dictionary { path } => Some(Arc::new(
                StubDictionary::load(path).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            )),
            TranslationConfig::Remote { url, timeout_secs } => Some(Arc::new(
                RemoteTranslator::new(url.clone(), Duration::from_secs(*timeout_secs)),
            )),
        })
    }

    /// Engine with the registry, pipe, backends and translator this config
    /// describes.
    pub fn build_engine(&self) -> Result<Engine, ConfigError> {
        let registry = Arc::new(self.registry()?);
        let pipe = Arc::new(self.pipe()?);
        let (planner, responder) = self.backends()?;
        let mut engine = Engine::new(registry, pipe, planner)
            .with_responder(responder)
            .with_settings(self.settings())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(t) = self.translator()? {
            engine = engine.with_translator(t);
        }
        Ok(engine)
    }
}
