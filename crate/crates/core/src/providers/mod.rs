//! Uniform completion client over chat endpoints and scripted mocks.

mod cache;
mod http;
mod mock;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, model_dir_name, CacheEntry, DiskCache};
pub use http::{
    extract_text, request_body, HttpBackend, HttpReply, ReqwestTransport, RetryPolicy, Sleeper, Transport,
    TransportError,
};
pub use mock::{mock_from_script, MockBackend};

use crate::prompts::RenderedPrompt;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("gave up after {attempts} attempts (last status {last_status:?})")]
    ExhaustedRetries { last_status: Option<u16>, attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error("no scripted response for prompt {digest} (tag `{tag}`)")]
    ScriptMiss { digest: String, tag: String },
    #[error("mock script: {0}")]
    Script(String),
    #[error("invalid endpoint `{model_id}`: {reason}")]
    InvalidEndpoint { model_id: String, reason: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

fn default_completions_path() -> String {
    "/chat/completions".into()
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_response_path() -> String {
    "/choices/0/message/content".into()
}
fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub model_id: String,
    #[serde(default)]
    pub base_url: String,
    #[serde(default = "default_completions_path")]
    pub completions_path: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// JSON pointer to the completion text in the reply.
    #[serde(default = "default_response_path")]
    pub response_path: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// When set the endpoint is answered from this script instead of HTTP.
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
}

impl ModelEndpoint {
    pub fn new(model_id: impl Into<String>) -> Self {
        ModelEndpoint {
            model_id: model_id.into(),
            base_url: String::new(),
            completions_path: default_completions_path(),
            api_key_env: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            response_path: default_response_path(),
            max_in_flight: default_max_in_flight(),
            mock_script: None,
        }
    }

    pub fn completions_url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.completions_path)
    }

    /// Only temperature 0 runs are considered reproducible.
    pub fn is_reproducible(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |reason: &str| ProviderError::InvalidEndpoint {
            model_id: self.model_id.clone(),
            reason: reason.to_string(),
        };
        if self.model_id.is_empty() {
            return Err(bad("empty model_id"));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(bad("temperature must be >= 0"));
        }
        if self.max_tokens == 0 {
            return Err(bad("max_tokens must be positive"));
        }
        if self.max_in_flight == 0 {
            return Err(bad("max_in_flight must be positive"));
        }
        if self.mock_script.is_none() && self.base_url.is_empty() {
            return Err(bad("base_url is required for HTTP endpoints"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub attempts: u32,
}

/// Something that turns a prompt into raw completion text.
pub trait Backend: Send + Sync {
    fn send(&self, endpoint: &ModelEndpoint, prompt: &RenderedPrompt) -> Result<BackendReply, ProviderError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub from_cache: bool,
    /// 0 when served from cache.
    pub attempts: u32,
    pub latency: Duration,
}

#[derive(Debug, Default)]
struct Counters {
    hits: AtomicU64,
    misses: AtomicU64,
    provider_calls: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Requests that reached the backend (HTTP or mock).
    pub provider_calls: u64,
}

impl std::ops::Add for CallStats {
    type Output = CallStats;
    fn add(self, o: CallStats) -> CallStats {
        CallStats {
            cache_hits: self.cache_hits + o.cache_hits,
            cache_misses: self.cache_misses + o.cache_misses,
            provider_calls: self.provider_calls + o.provider_calls,
        }
    }
}

/// An endpoint bound to a backend and an optional cache.
#[derive(Clone)]
pub struct Client {
    endpoint: ModelEndpoint,
    backend: Arc<dyn Backend>,
    cache: Option<DiskCache>,
    counters: Arc<Counters>,
}

impl Client {
    pub fn new(endpoint: ModelEndpoint, backend: Arc<dyn Backend>) -> Self {
        Client {
            endpoint,
            backend,
            cache: None,
            counters: Arc::default(),
        }
    }

    /// Builds the backend the endpoint describes: a scripted mock or HTTP.
    pub fn from_endpoint(endpoint: ModelEndpoint) -> Result<Self, ProviderError> {
        endpoint.validate()?;
        let backend: Arc<dyn Backend> = match &endpoint.mock_script {
            Some(path) => Arc::new(mock_from_script(path)?),
            None => Arc::new(HttpBackend::new(Box::new(ReqwestTransport::new()?))),
        };
        Ok(Client::new(endpoint, backend))
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    pub fn model_id(&self) -> &str {
        &self.endpoint.model_id
    }

    pub fn stats(&self) -> CallStats {
        CallStats {
            cache_hits: self.counters.hits.load(Ordering::Relaxed),
            cache_misses: self.counters.misses.load(Ordering::Relaxed),
            provider_calls: self.counters.provider_calls.load(Ordering::Relaxed),
        }
    }

    pub fn complete(&self, prompt: &RenderedPrompt) -> Result<CompletionResult, ProviderError> {
        let started = Instant::now();
        let e = &self.endpoint;
        let key = cache_key(&e.model_id, prompt.text.as_bytes(), e.temperature, e.max_tokens);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&e.model_id, &key)? {
                self.counters.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(CompletionResult {
                    text: entry.value,
                    from_cache: true,
                    attempts: 0,
                    latency: started.elapsed(),
                });
            }
            self.counters.misses.fetch_add(1, Ordering::Relaxed);
        }
        self.counters.provider_calls.fetch_add(1, Ordering::Relaxed);
        let reply = self.backend.send(e, prompt)?;
        let text = match &self.cache {
            Some(cache) => cache.put(&e.model_id, &key, &reply.text)?,
            None => reply.text,
        };
        Ok(CompletionResult {
            text,
            from_cache: false,
            attempts: reply.attempts,
            latency: started.elapsed(),
        })
    }
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("endpoint", &self.endpoint)
            .field("cache", &self.cache)
            .finish_non_exhaustive()
    }
}
