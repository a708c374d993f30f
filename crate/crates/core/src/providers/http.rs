//! Chat-completion requests over HTTP with exponential-backoff retries.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendReply, ModelEndpoint, ProviderError};
use crate::prompts::RenderedPrompt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("{0}")]
    Other(String),
}

/// One HTTP POST of a JSON body.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError> {
        let mut request = self.client.post(url).timeout(timeout).json(body);
        if let Some(token) = bearer {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(classify)?;
        let status = response.status().as_u16();
        let body = response.text().map_err(classify)?;
        Ok(HttpReply { status, body })
    }
}

fn classify(err: reqwest::Error) -> TransportError {
    if err.is_timeout() {
        TransportError::Timeout
    } else if err.is_connect() {
        TransportError::Connect(err.to_string())
    } else {
        TransportError::Other(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: u32,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base_delay: Duration::from_secs(1),
            factor: 2,
            max_attempts: 5,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `failed_attempts + 1`.
    pub fn delay_after(&self, failed_attempts: u32) -> Duration {
        self.base_delay * self.factor.saturating_pow(failed_attempts.saturating_sub(1))
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct HttpBackend {
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    sleep: Sleeper,
}

impl HttpBackend {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        HttpBackend {
            transport,
            retry: RetryPolicy::default(),
            sleep: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleep: Sleeper) -> Self {
        self.sleep = sleep;
        self
    }
}

pub fn request_body(endpoint: &ModelEndpoint, prompt: &RenderedPrompt) -> Value {
    json!({
        "model": endpoint.model_id,
        "messages": [{"role": "user", "content": prompt.text}],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
    })
}

/// Pulls the completion text out of a reply body at a JSON pointer.
pub fn extract_text(body: &str, pointer: &str) -> Result<String, ProviderError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| ProviderError::MalformedResponse(format!("reply is not JSON: {e}")))?;
    match value.pointer(pointer) {
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(ProviderError::MalformedResponse(format!("no text at `{pointer}`"))),
    }
}

impl Backend for HttpBackend {
    fn send(&self, endpoint: &ModelEndpoint, prompt: &RenderedPrompt) -> Result<BackendReply, ProviderError> {
        let key = match &endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ProviderError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let url = endpoint.completions_url();
        let body = request_body(endpoint, prompt);
        let timeout = Duration::from_secs(endpoint.timeout_secs);
        let mut last_status = None;
        for attempt in 1..=self.retry.max_attempts {
            match self.transport.post_json(&url, key.as_deref(), &body, timeout) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    let text = extract_text(&reply.body, &endpoint.response_path)?;
                    return Ok(BackendReply { text, attempts: attempt });
                }
                Ok(reply) if reply.status == 401 || reply.status == 403 => {
                    return Err(ProviderError::Auth(reply.status));
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    last_status = Some(reply.status);
                }
                Ok(reply) => {
                    return Err(ProviderError::HttpStatus {
                        status: reply.status,
                        body: reply.body,
                    });
                }
                Err(TransportError::Other(msg)) => return Err(ProviderError::Transport(msg)),
                Err(TransportError::Timeout | TransportError::Connect(_)) => last_status = None,
            }
            if attempt < self.retry.max_attempts {
                (self.sleep)(self.retry.delay_after(attempt));
            }
        }
        Err(ProviderError::ExhaustedRetries {
            last_status,
            attempts: self.retry.max_attempts,
        })
    }
}
