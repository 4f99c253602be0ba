//! Client for the embedding service: `POST /embed` with `{"texts": [...]}`
//! answered by `{"model", "dim", "vectors"}`, and `GET /health`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::providers::EmbeddingProvider;
use super::{EmbeddingError, EmbeddingFingerprint};

/// Largest batch sent in one request.
pub const MAX_BATCH: usize = 64;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    model: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct Health {
    status: String,
    model: String,
}

#[derive(Debug)]
pub struct HttpEmbeddingProvider {
    base_url: String,
    model: String,
    agent: ureq::Agent,
}

fn provider_err(e: impl std::fmt::Display) -> EmbeddingError {
    EmbeddingError::Provider(e.to_string())
}

impl HttpEmbeddingProvider {
    /// Checks `GET /health` and records the model the service reports.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self, EmbeddingError> {
        let base_url = base_url.trim_end_matches('/').to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .get(&format!("{base_url}/health"))
            .call()
            .map_err(provider_err)?;
        if resp.status().as_u16() != 200 {
            return Err(EmbeddingError::Provider(format!(
                "health check returned HTTP {}",
                resp.status().as_u16()
            )));
        }
        let health: Health = resp.body_mut().read_json().map_err(provider_err)?;
        if health.status != "ok" {
            return Err(EmbeddingError::Provider(format!(
                "service status is `{}`",
                health.status
            )));
        }
        Ok(Self {
            base_url,
            model: health.model,
            agent,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn fingerprint(&self) -> EmbeddingFingerprint {
        EmbeddingFingerprint {
            provider: "http".into(),
            model: self.model.clone(),
        }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        if texts.len() > MAX_BATCH {
            return Err(EmbeddingError::InvalidConfig(format!(
                "batch of {} exceeds {MAX_BATCH}",
                texts.len()
            )));
        }
        let mut resp = self
            .agent
            .post(&format!("{}/embed", self.base_url))
            .send_json(&EmbedRequest { texts })
            .map_err(provider_err)?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(EmbeddingError::Provider(format!("HTTP {status}: {body}")));
        }
        let parsed: EmbedResponse = resp.body_mut().read_json().map_err(provider_err)?;
        if parsed.model != self.model {
            return Err(EmbeddingError::Provider(format!(
                "service switched model from `{}` to `{}`",
                self.model, parsed.model
            )));
        }
        for v in &parsed.vectors {
            if v.len() != parsed.dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: parsed.dim,
                    got: v.len(),
                });
            }
        }
        Ok(parsed.vectors)
    }
}
