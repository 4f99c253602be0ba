use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::cache::PromptStage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error("malformed provider response: {0}")]
    InvalidResponse(String),
    #[error("injected failure: {0}")]
    Injected(String),
}

impl ProviderError {
    /// Whether retrying the same request may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Network(_)
            | ProviderError::Timeout
            | ProviderError::RateLimited { .. } => true,
            ProviderError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// One chat-completion call. `stage` and `report_text` are metadata for
/// offline providers; HTTP providers send only `messages`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub stage: PromptStage,
    pub report_id: Option<String>,
    pub report_text: Option<String>,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// SHA-256 over the role/content sequence, hex encoded.
    pub fn prompt_hash(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            h.update(m.role.as_bytes());
            h.update(b"\n");
            h.update(m.content.as_bytes());
            h.update(b"\n\0");
        }
        hex::encode(h.finalize())
    }
}

/// Model identity as it enters cache keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderFingerprint {
    pub model: String,
    pub temperature: f64,
}

impl fmt::Display for ProviderFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.model, self.temperature)
    }
}

pub trait ChatProvider: Send + Sync {
    fn fingerprint(&self) -> ProviderFingerprint;

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn fingerprint(&self) -> ProviderFingerprint {
        (**self).fingerprint()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn fingerprint(&self) -> ProviderFingerprint {
        (**self).fingerprint()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatProviderConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_retries() -> u32 {
    3
}

fn default_timeout_secs() -> u64 {
    60
}

impl ChatProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if self.endpoint.trim().is_empty() {
            return Err("chat endpoint is empty".into());
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (0-based): base * 2^attempt, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.min(16)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Calls the provider, retrying transient failures with exponential backoff.
/// A `retry_after` hint from the server overrides the computed delay.
pub fn complete_with_retry<P: ChatProvider + ?Sized>(
    provider: &P,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> Result<String, ProviderError> {
    let mut attempt = 0;
    loop {
        match provider.complete(request) {
            Ok(text) => return Ok(text),
            Err(err) if err.is_transient() && attempt < policy.max_retries => {
                let delay = match &err {
                    ProviderError::RateLimited {
                        retry_after: Some(d),
                    } => (*d).min(policy.max_delay),
                    _ => policy.delay(attempt),
                };
                log::debug!(
                    "{:?} request failed ({err}); retry {} in {delay:?}",
                    request.stage,
                    attempt + 1
                );
                std::thread::sleep(delay);
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}
