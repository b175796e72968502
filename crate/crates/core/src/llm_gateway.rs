//! Caption rewriting through an OpenAI-compatible chat-completion endpoint.
//!
//! A rewrite request is the caption and a fixed instruction joined into a
//! single user message (caption first by default), optionally preceded by a
//! system message. The gateway retries transport failures a bounded number
//! of times, shares one rate limiter across all callers, and sanitizes the
//! completion into a one-line candidate caption.

use std::env;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CaptionRecord;
use crate::rate_limit::RateLimiter;
use crate::stable_hash::hex_digest;
use crate::transport::{self, TransportError};

pub const DEFAULT_INSTRUCTION: &str = "Rewrite this image caption.";
pub const ENV_LLM_URL: &str = "LLMDA_LLM_URL";
pub const ENV_LLM_API_KEY: &str = "LLMDA_LLM_API_KEY";

/// Minimum share of ASCII letters among non-whitespace characters for a
/// completion to count as a caption.
pub const MIN_ASCII_LETTER_RATIO: f64 = 0.30;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    /// Transport retries exhausted. Retryable at the record level.
    #[error("gateway failed after {tries} tries: {last}")]
    Transport { tries: u32, last: TransportError },
    /// The endpoint refused the request as malformed or unauthorized.
    #[error("gateway rejected request: {0}")]
    Config(TransportError),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }

    pub(crate) fn from_final(err: TransportError, tries: u32) -> Self {
        match err {
            TransportError::Protocol(msg) => GatewayError::Protocol(msg),
            e if e.is_retryable() => GatewayError::Transport { tries, last: e },
            e => GatewayError::Config(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcatOrder {
    #[default]
    CaptionThenInstruction,
    InstructionThenCaption,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("prompt instruction must not be empty")]
pub struct EmptyInstruction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct PromptTemplate {
    instruction: String,
    concat_order: ConcatOrder,
    system_preamble: Option<String>,
}

#[derive(Deserialize)]
struct RawTemplate {
    #[serde(default = "default_instruction")]
    instruction: String,
    #[serde(default)]
    concat_order: ConcatOrder,
    #[serde(default)]
    system_preamble: Option<String>,
}

fn default_instruction() -> String {
    DEFAULT_INSTRUCTION.to_string()
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = EmptyInstruction;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        PromptTemplate::new(raw.instruction, raw.concat_order, raw.system_preamble)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            concat_order: ConcatOrder::default(),
            system_preamble: None,
        }
    }
}

impl PromptTemplate {
    pub fn new(
        instruction: impl Into<String>,
        concat_order: ConcatOrder,
        system_preamble: Option<String>,
    ) -> Result<Self, EmptyInstruction> {
        let instruction = instruction.into();
        if instruction.trim().is_empty() {
            return Err(EmptyInstruction);
        }
        Ok(PromptTemplate {
            instruction,
            concat_order,
            system_preamble,
        })
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    pub fn concat_order(&self) -> ConcatOrder {
        self.concat_order
    }

    pub fn system_preamble(&self) -> Option<&str> {
        self.system_preamble.as_deref()
    }

    /// The user message for `caption`.
    pub fn render(&self, caption: &str) -> String {
        match self.concat_order {
            ConcatOrder::CaptionThenInstruction => format!("{caption} {}", self.instruction),
            ConcatOrder::InstructionThenCaption => format!("{} {caption}", self.instruction),
        }
    }

    /// Inverse of [`render`](Self::render) for a message this template produced.
    pub fn extract_caption<'a>(&self, message: &'a str) -> Option<&'a str> {
        match self.concat_order {
            ConcatOrder::CaptionThenInstruction => message.strip_suffix(self.instruction.as_str()),
            ConcatOrder::InstructionThenCaption => message.strip_prefix(self.instruction.as_str()),
        }
        .map(str::trim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Wire body of `POST /v1/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Hex SHA-256 of the rendered messages. Sampling parameters are not
    /// part of the prompt and do not affect the hash.
    pub fn prompt_hash(&self) -> String {
        let rendered = serde_json::to_vec(&self.messages).expect("messages serialize");
        hex_digest(&rendered)
    }

    pub fn user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub sampling_temperature: f64,
    pub max_output_tokens: u32,
    pub transport_retry_limit: u32,
    pub requests_per_second_cap: f64,
    pub request_timeout_ms: u64,
    /// Base delay before a transport retry; doubles per retry up to 8x.
    pub retry_backoff_ms: u64,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint_url: "http://127.0.0.1:8000".to_string(),
            model_id: "vicuna-13b-v1.5".to_string(),
            sampling_temperature: 0.7,
            max_output_tokens: 128,
            transport_retry_limit: 3,
            requests_per_second_cap: 10.0,
            request_timeout_ms: 60_000,
            retry_backoff_ms: 250,
            api_key_env: Some(ENV_LLM_API_KEY.to_string()),
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sampling_temperature >= 0.0 && self.sampling_temperature.is_finite()) {
            return Err(format!("sampling_temperature must be >= 0, got {}", self.sampling_temperature));
        }
        if !(self.requests_per_second_cap > 0.0 && self.requests_per_second_cap.is_finite()) {
            return Err(format!(
                "requests_per_second_cap must be > 0, got {}",
                self.requests_per_second_cap
            ));
        }
        if self.model_id.is_empty() {
            return Err("model_id must not be empty".to_string());
        }
        Ok(())
    }

    pub(crate) fn api_key(&self) -> Option<String> {
        self.api_key_env.as_deref().and_then(|name| env::var(name).ok())
    }
}

/// Identifies the logical request a transport call belongs to. HTTP
/// backends ignore it; the in-process mock uses it to stay deterministic.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub text_id: &'a str,
    pub source_text: &'a str,
    /// Rewrite attempt for this caption, starting at 1.
    pub attempt: u32,
    /// Transport try within the attempt, starting at 1.
    pub transport_try: u32,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest, ctx: &CallContext<'_>) -> Result<String, TransportError>;
}

/// Talks to a real endpoint over HTTP.
pub struct HttpChatBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpChatBackend {
    /// `LLMDA_LLM_URL` overrides `config.endpoint_url` when set.
    pub fn new(config: &GatewayConfig) -> Self {
        let base = env::var(ENV_LLM_URL).unwrap_or_else(|_| config.endpoint_url.clone());
        HttpChatBackend {
            agent: transport::agent(config.request_timeout_ms),
            url: transport::endpoint(&base, "/v1/chat/completions"),
            api_key: config.api_key(),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest, _ctx: &CallContext<'_>) -> Result<String, TransportError> {
        let body = transport::post_json(&self.agent, &self.url, self.api_key.as_deref(), request)?;
        body.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| TransportError::Protocol("missing choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum SanitizeRejection {
    #[error("completion is empty after cleanup")]
    Empty,
    #[error("too few ASCII letters")]
    NotEnoughLetters,
}

/// One LLM output for one caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteCandidate {
    pub text_id: String,
    pub attempt: u32,
    pub raw_completion: String,
    /// Empty when `rejection` is set.
    pub candidate_text: String,
    pub rejection: Option<SanitizeRejection>,
    pub model_id: String,
    pub prompt_hash: String,
    pub latency_ms: u64,
    pub transport_tries: u32,
}

impl RewriteCandidate {
    pub fn is_usable(&self) -> bool {
        self.rejection.is_none()
    }
}

pub fn build_rewrite_request(original: &CaptionRecord, template: &PromptTemplate, config: &GatewayConfig) -> ChatRequest {
    let mut messages = Vec::with_capacity(2);
    if let Some(system) = template.system_preamble() {
        messages.push(ChatMessage {
            role: Role::System,
            content: system.to_string(),
        });
    }
    messages.push(ChatMessage {
        role: Role::User,
        content: template.render(&original.text),
    });
    ChatRequest {
        model: config.model_id.clone(),
        messages,
        temperature: config.sampling_temperature,
        max_tokens: config.max_output_tokens,
    }
}

const LABEL_KEYWORDS: &[&str] = &[
    "caption",
    "rewrit",
    "paraphras",
    "sure",
    "certainly",
    "here is",
    "here's",
    "output",
    "answer",
    "description",
];

const QUOTE_PAIRS: &[(char, char)] = &[('"', '"'), ('\'', '\''), ('`', '`'), ('“', '”'), ('‘', '’'), ('«', '»')];

/// Cleans a raw completion into a one-line caption.
///
/// Repeats label and quote stripping until nothing changes, which makes the
/// function idempotent on accepted output.
pub fn sanitize_response(raw: &str) -> Result<String, SanitizeRejection> {
    let mut text = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let next = strip_quotes(strip_label(&text)).trim().to_string();
        if next == text {
            break;
        }
        text = next;
    }
    if text.is_empty() {
        return Err(SanitizeRejection::Empty);
    }
    if ascii_letter_ratio(&text) < MIN_ASCII_LETTER_RATIO {
        return Err(SanitizeRejection::NotEnoughLetters);
    }
    Ok(text)
}

/// Share of ASCII letters among non-whitespace characters.
pub fn ascii_letter_ratio(text: &str) -> f64 {
    let (letters, total) = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .fold((0usize, 0usize), |(l, t), c| (l + usize::from(c.is_ascii_alphabetic()), t + 1));
    if total == 0 {
        0.0
    } else {
        letters as f64 / total as f64
    }
}

fn strip_label(text: &str) -> &str {
    let Some(colon) = text.char_indices().take(80).find(|(_, c)| *c == ':').map(|(i, _)| i) else {
        return text;
    };
    let label = text[..colon].to_lowercase();
    if label.contains(['.', '"']) || !LABEL_KEYWORDS.iter().any(|k| label.contains(k)) {
        return text;
    }
    text[colon + 1..].trim_start()
}

fn strip_quotes(text: &str) -> &str {
    let mut chars = text.chars();
    let (Some(first), Some(last)) = (chars.next(), chars.next_back()) else {
        return text;
    };
    if QUOTE_PAIRS.iter().any(|&(open, close)| first == open && last == close) {
        &text[first.len_utf8()..text.len() - last.len_utf8()]
    } else {
        text
    }
}

/// Rewrite client shared by all pipeline workers.
pub struct LlmGateway {
    backend: Arc<dyn ChatBackend>,
    config: GatewayConfig,
    template: PromptTemplate,
    limiter: RateLimiter,
    requests: AtomicU64,
}

impl LlmGateway {
    /// Panics if `config` fails [`GatewayConfig::validate`].
    pub fn new(backend: Arc<dyn ChatBackend>, config: GatewayConfig, template: PromptTemplate) -> Self {
        if let Err(e) = config.validate() {
            panic!("invalid gateway config: {e}");
        }
        LlmGateway {
            limiter: RateLimiter::per_second(config.requests_per_second_cap),
            backend,
            config,
            template,
            requests: AtomicU64::new(0),
        }
    }

    pub fn http(config: GatewayConfig, template: PromptTemplate) -> Self {
        let backend = Arc::new(HttpChatBackend::new(&config));
        Self::new(backend, config, template)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    /// Transport requests issued so far, retries included.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// Requests one rewrite of `original`. `attempt` is the caller's rewrite
    /// attempt index (1-based) and is stored on the candidate.
    ///
    /// A completion that fails sanitization is still returned, with
    /// `rejection` set; only transport-level failures are errors.
    pub fn rewrite(&self, original: &CaptionRecord, attempt: u32) -> Result<RewriteCandidate, GatewayError> {
        let request = build_rewrite_request(original, &self.template, &self.config);
        let prompt_hash = request.prompt_hash();
        let max_tries = 1 + self.config.transport_retry_limit;
        let started = Instant::now();

        for transport_try in 1..=max_tries {
            self.limiter.acquire();
            self.requests.fetch_add(1, Ordering::Relaxed);
            let ctx = CallContext {
                text_id: &original.text_id,
                source_text: &original.text,
                attempt,
                transport_try,
            };
            match self.backend.complete(&request, &ctx) {
                Ok(raw) => {
                    let (candidate_text, rejection) = match sanitize_response(&raw) {
                        Ok(text) => (text, None),
                        Err(r) => (String::new(), Some(r)),
                    };
                    return Ok(RewriteCandidate {
                        text_id: original.text_id.clone(),
                        attempt,
                        raw_completion: raw,
                        candidate_text,
                        rejection,
                        model_id: self.config.model_id.clone(),
                        prompt_hash,
                        latency_ms: started.elapsed().as_millis() as u64,
                        transport_tries: transport_try,
                    });
                }
                Err(e) if e.is_retryable() && transport_try < max_tries => {
                    log::debug!("{}: transport try {transport_try} failed: {e}", original.text_id);
                    thread::sleep(transport::backoff(self.config.retry_backoff_ms, transport_try));
                }
                Err(e) => return Err(GatewayError::from_final(e, transport_try)),
            }
        }
        unreachable!("loop returns on the final try")
    }
}
