//! Sentence embeddings from an OpenAI-compatible `/v1/embeddings` endpoint,
//! and the cosine similarity used by the faithfulness filter.

use std::env;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm_gateway::{GatewayConfig, GatewayError};
use crate::rate_limit::RateLimiter;
use crate::transport::{self, TransportError};

pub const ENV_EMBED_URL: &str = "LLMDA_EMBED_URL";
pub const ENV_EMBED_API_KEY: &str = "LLMDA_EMBED_API_KEY";

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub model_id: String,
    pub unit_norm: bool,
}

impl Embedding {
    /// L2-normalizes `vector`. Fails on empty input or a zero vector.
    pub fn normalized(vector: Vec<f64>, model_id: impl Into<String>) -> Result<Self, SimilarityError> {
        let norm = l2_norm(&vector);
        if vector.is_empty() || norm == 0.0 || !norm.is_finite() {
            return Err(SimilarityError::ZeroVector);
        }
        Ok(Embedding {
            vector: vector.into_iter().map(|x| x / norm).collect(),
            model_id: model_id.into(),
            unit_norm: true,
        })
    }

    /// Keeps `vector` as given; `unit_norm` reflects whether it already is.
    pub fn raw(vector: Vec<f64>, model_id: impl Into<String>) -> Self {
        let unit_norm = !vector.is_empty() && (l2_norm(&vector) - 1.0).abs() <= UNIT_NORM_TOLERANCE;
        Embedding {
            vector,
            model_id: model_id.into(),
            unit_norm,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, SimilarityError> {
    cosine(&a.vector, &b.vector)
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait EmbedBackend: Send + Sync {
    /// One vector per input, in input order.
    fn embed_batch(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError>;
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

pub struct HttpEmbedBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpEmbedBackend {
    /// `LLMDA_EMBED_URL` overrides `config.endpoint_url` when set.
    pub fn new(config: &GatewayConfig) -> Self {
        let base = env::var(ENV_EMBED_URL).unwrap_or_else(|_| config.endpoint_url.clone());
        HttpEmbedBackend {
            agent: transport::agent(config.request_timeout_ms),
            url: transport::endpoint(&base, "/v1/embeddings"),
            api_key: config.api_key(),
        }
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn embed_batch(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        let body = transport::post_json(
            &self.agent,
            &self.url,
            self.api_key.as_deref(),
            &EmbeddingRequest { model, input: texts },
        )?;
        parse_embedding_response(&body, texts.len())
    }
}

/// Reads `data[i].embedding`, honouring an explicit `index` field when the
/// server returns entries out of order.
pub(crate) fn parse_embedding_response(body: &Value, expected: usize) -> Result<Vec<Vec<f64>>, TransportError> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| TransportError::Protocol("missing data array".into()))?;
    if data.len() != expected {
        return Err(TransportError::Protocol(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut out = vec![Vec::new(); expected];
    for (pos, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let vector = item
            .get("embedding")
            .and_then(Value::as_array)
            .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
            .ok_or_else(|| TransportError::Protocol(format!("data[{pos}].embedding is not a number array")))?;
        let slot = out
            .get_mut(index)
            .ok_or_else(|| TransportError::Protocol(format!("embedding index {index} out of range")))?;
        *slot = vector;
    }
    Ok(out)
}

pub struct EmbedGateway {
    backend: Arc<dyn EmbedBackend>,
    config: GatewayConfig,
    limiter: RateLimiter,
    calls: AtomicU64,
}

impl EmbedGateway {
    /// Panics if `config` fails [`GatewayConfig::validate`].
    pub fn new(backend: Arc<dyn EmbedBackend>, config: GatewayConfig) -> Self {
        if let Err(e) = config.validate() {
            panic!("invalid embedder config: {e}");
        }
        EmbedGateway {
            limiter: RateLimiter::per_second(config.requests_per_second_cap),
            backend,
            config,
            calls: AtomicU64::new(0),
        }
    }

    pub fn http(config: GatewayConfig) -> Self {
        let backend = Arc::new(HttpEmbedBackend::new(&config));
        Self::new(backend, config)
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    /// Service requests issued so far, retries included.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Embeds `texts` in chunks of `batch_size`, preserving order. Vectors
    /// are re-normalized locally whatever the service returns.
    pub fn embed(&self, texts: &[String], batch_size: usize) -> Result<Vec<Embedding>, GatewayError> {
        assert!(batch_size >= 1, "batch_size must be at least 1");
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(GatewayError::Protocol(format!("input {i} is empty")));
        }
        let mut out = Vec::with_capacity(texts.len());
        let mut dim = None;
        for chunk in texts.chunks(batch_size) {
            for vector in self.embed_chunk(chunk)? {
                if *dim.get_or_insert(vector.len()) != vector.len() {
                    return Err(GatewayError::Protocol(format!(
                        "dimension mismatch within batch: {} vs {}",
                        dim.unwrap_or_default(),
                        vector.len()
                    )));
                }
                let e = Embedding::normalized(vector, self.config.model_id.clone())
                    .map_err(|e| GatewayError::Protocol(e.to_string()))?;
                out.push(e);
            }
        }
        Ok(out)
    }

    pub fn embed_one(&self, text: &str) -> Result<Embedding, GatewayError> {
        let mut v = self.embed(&[text.to_string()], 1)?;
        Ok(v.remove(0))
    }

    fn embed_chunk(&self, chunk: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let max_tries = 1 + self.config.transport_retry_limit;
        for attempt in 1..=max_tries {
            self.limiter.acquire();
            self.calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.embed_batch(&self.config.model_id, chunk) {
                Ok(vectors) if vectors.len() == chunk.len() => return Ok(vectors),
                Ok(vectors) => {
                    return Err(GatewayError::Protocol(format!(
                        "expected {} embeddings, got {}",
                        chunk.len(),
                        vectors.len()
                    )))
                }
                Err(e) if e.is_retryable() && attempt < max_tries => {
                    thread::sleep(transport::backoff(self.config.retry_backoff_ms, attempt));
                }
                Err(e) => return Err(GatewayError::from_final(e, attempt)),
            }
        }
        unreachable!("loop returns on the final try")
    }
}
