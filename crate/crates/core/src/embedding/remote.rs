//! HTTP embedding provider: `POST {base_url}/embeddings` with
//! `{"model": .., "input": [..]}`, answered by `{"data": [{"embedding": [..]}]}`,
//! bearer-token auth.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{normalize, Embedder, EmbeddingError, EmbeddingSpace, EmbeddingVector, Provenance};

#[derive(Debug, Clone)]
pub struct RemoteEmbeddingConfig {
    pub base_url: String,
    pub model: String,
    pub dimension: usize,
    pub api_key: Option<String>,
    pub batch_size: usize,
    pub max_attempts: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl RemoteEmbeddingConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, dimension: usize) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            dimension,
            api_key: std::env::var("LLM_API_KEY").ok(),
            batch_size: 64,
            max_attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Credentials refused; never retried.
    Auth(String),
    /// Network failure, timeout, 429 or 5xx; retried.
    Transient(String),
    /// Malformed response; never retried.
    Protocol(String),
}

/// One round trip to the provider for a single batch.
pub trait EmbeddingTransport: Send + Sync {
    fn embed_batch(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f64>>, TransportError>;
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

pub struct HttpEmbeddingTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpEmbeddingTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbeddingError::Config(e.to_string()))?;
        Ok(Self { client, url: format!("{}/embeddings", base_url.trim_end_matches('/')), api_key })
    }
}

impl EmbeddingTransport for HttpEmbeddingTransport {
    fn embed_batch(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        let mut req = self.client.post(&self.url).json(&EmbeddingRequest { model, input: inputs });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(TransportError::Auth(format!("provider refused credentials ({status})")));
        }
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(TransportError::Transient(format!("provider returned {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Protocol(format!("provider returned {status}")));
        }
        let body: EmbeddingResponse = resp.json().map_err(|e| TransportError::Protocol(e.to_string()))?;
        Ok(body.data.into_iter().map(|d| d.embedding).collect())
    }
}

pub struct RemoteEmbedder {
    space: EmbeddingSpace,
    config: RemoteEmbeddingConfig,
    transport: Box<dyn EmbeddingTransport>,
}

impl RemoteEmbedder {
    pub fn new(space_name: impl Into<String>, config: RemoteEmbeddingConfig) -> Result<Self, EmbeddingError> {
        let transport = HttpEmbeddingTransport::new(&config.base_url, config.api_key.clone(), config.timeout)?;
        Ok(Self::with_transport(space_name, config, Box::new(transport)))
    }

    pub fn with_transport(
        space_name: impl Into<String>,
        config: RemoteEmbeddingConfig,
        transport: Box<dyn EmbeddingTransport>,
    ) -> Self {
        let space = EmbeddingSpace::new(
            space_name,
            config.dimension,
            Provenance::RemoteModel { model: config.model.clone() },
        );
        Self { space, config, transport }
    }

    fn run_batch(&self, batch: &[String]) -> Result<Vec<EmbeddingVector>, TransportError> {
        let mut delay = self.config.backoff;
        let mut last = TransportError::Transient("no attempts made".into());
        for attempt in 0..self.config.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.transport.embed_batch(&self.config.model, batch) {
                Ok(rows) => return self.check(batch.len(), rows),
                Err(TransportError::Transient(msg)) => {
                    tracing::warn!(attempt, %msg, "embedding batch failed");
                    last = TransportError::Transient(msg);
                }
                Err(other) => return Err(other),
            }
        }
        Err(last)
    }

    fn check(&self, expected: usize, rows: Vec<Vec<f64>>) -> Result<Vec<EmbeddingVector>, TransportError> {
        if rows.len() != expected {
            return Err(TransportError::Protocol(format!("expected {expected} vectors, got {}", rows.len())));
        }
        rows.iter()
            .map(|row| {
                if row.len() != self.space.dimension {
                    return Err(TransportError::Protocol(format!(
                        "dimension mismatch: space expects {}, got {}",
                        self.space.dimension,
                        row.len()
                    )));
                }
                let components = normalize(row).map_err(|e| TransportError::Protocol(e.to_string()))?;
                Ok(EmbeddingVector { space: self.space.name.clone(), components })
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn space(&self) -> &EmbeddingSpace {
        &self.space
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let batches: Vec<&[String]> = texts.chunks(self.config.batch_size.max(1)).collect();
        let results = crate::parallel::bounded_map(&batches, self.config.max_in_flight, |_, b| self.run_batch(b));
        let mut out = Vec::with_capacity(texts.len());
        let mut failed = Vec::new();
        let mut message = String::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => out.extend(v),
                Err(TransportError::Auth(m)) => return Err(EmbeddingError::Config(m)),
                Err(TransportError::Protocol(m)) => return Err(EmbeddingError::Protocol(m)),
                Err(TransportError::Transient(m)) => {
                    failed.push(i);
                    message = m;
                }
            }
        }
        if !failed.is_empty() {
            return Err(EmbeddingError::Transient { failed_batches: failed, message });
        }
        Ok(out)
    }
}
