//! Per-role backend configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ModelBackend;
use crate::http::HttpBackend;
use crate::mock::{MockBackend, MockOptions};
use crate::prompts::{PromptSet, PromptTemplate};
use crate::resilient::{ResilientBackend, RetryPolicy};

pub const DEFAULT_API_KEY_ENV: &str = "FINEFORGE_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid mock endpoint: {0}")]
    Mock(String),
    #[error("unsupported endpoint scheme in {0:?}")]
    Scheme(String),
    #[error("reading prompt {path}: {source}")]
    Prompt {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// Prompt files overriding the bundled ones, relative to the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptOverrides {
    /// Genericization chain; replaces the bundled single step when non-empty.
    pub genericize: Vec<PathBuf>,
    pub describe: Option<PathBuf>,
    pub instantiate: Option<PathBuf>,
    pub judge: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// `http(s)://host[:port]` or `mock:` with optional `?key=value` options.
    pub endpoint: String,
    pub model: String,
    pub max_input_chars: usize,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub retries: u32,
    pub concurrency: usize,
    pub timeout_secs: u64,
    pub backoff_ms: u64,
    pub api_key_env: String,
    pub chat_path: Option<String>,
    pub embeddings_path: Option<String>,
    pub token_embeddings: bool,
    pub prompts: PromptOverrides,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "mock:".into(),
            model: String::new(),
            max_input_chars: 20_000,
            temperature: 0.0,
            max_tokens: None,
            retries: 3,
            concurrency: 8,
            timeout_secs: 120,
            backoff_ms: 500,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            chat_path: None,
            embeddings_path: None,
            token_embeddings: false,
            prompts: PromptOverrides::default(),
        }
    }
}

impl BackendConfig {
    pub fn is_mock(&self) -> bool {
        self.endpoint.starts_with("mock:")
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.retries,
            base_delay: Duration::from_millis(self.backoff_ms),
            ..RetryPolicy::default()
        }
    }

    pub fn prompt_set(&self, base_dir: &Path) -> Result<PromptSet, ConfigError> {
        let load = |p: &PathBuf| {
            let path = base_dir.join(p);
            PromptTemplate::load(&path).map_err(|source| ConfigError::Prompt { path, source })
        };
        let mut set = PromptSet::default();
        if !self.prompts.genericize.is_empty() {
            set.genericize_chain = self.prompts.genericize.iter().map(load).collect::<Result<_, _>>()?;
        }
        if let Some(p) = &self.prompts.describe {
            set.describe = load(p)?;
        }
        if let Some(p) = &self.prompts.instantiate {
            set.instantiate = load(p)?;
        }
        if let Some(p) = &self.prompts.judge {
            set.judge = load(p)?;
        }
        Ok(set)
    }
}

/// Builds the backend a role config describes, wrapped with retries and the
/// concurrency cap. Mock endpoints start from `mock_defaults` and override
/// whatever their query string sets.
pub fn build_backend(
    cfg: &BackendConfig,
    base_dir: &Path,
    mock_defaults: &MockOptions,
) -> Result<Arc<dyn ModelBackend>, ConfigError> {
    if cfg.concurrency == 0 {
        return Err(ConfigError::NonPositive("concurrency"));
    }
    if cfg.max_input_chars == 0 {
        return Err(ConfigError::NonPositive("max_input_chars"));
    }
    let policy = cfg.retry_policy();
    if cfg.is_mock() {
        let opts = mock_defaults
            .clone()
            .with_endpoint(&cfg.endpoint)
            .map_err(ConfigError::Mock)?;
        let mock = MockBackend::new(opts);
        return Ok(Arc::new(ResilientBackend::new(mock, policy, cfg.concurrency)));
    }
    if !(cfg.endpoint.starts_with("http://") || cfg.endpoint.starts_with("https://")) {
        return Err(ConfigError::Scheme(cfg.endpoint.clone()));
    }
    let mut http = HttpBackend::new(
        cfg.endpoint.clone(),
        cfg.model.clone(),
        Duration::from_secs(cfg.timeout_secs),
    );
    http.temperature = cfg.temperature;
    http.max_tokens = cfg.max_tokens;
    http.api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
    http.token_embeddings = cfg.token_embeddings;
    http.prompts = cfg.prompt_set(base_dir)?;
    if let Some(p) = &cfg.chat_path {
        http.chat_path = p.clone();
    }
    if let Some(p) = &cfg.embeddings_path {
        http.embeddings_path = p.clone();
    }
    Ok(Arc::new(ResilientBackend::new(http, policy, cfg.concurrency)))
}
