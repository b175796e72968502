//! HTTP plumbing shared by the chat and embedding gateways.

use std::time::Duration;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

/// One failed request, before the gateway decides whether to retry.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl TransportError {
    /// Connection failures, timeouts, 429 and 5xx may succeed on retry.
    /// Other 4xx responses and malformed bodies will not.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Unreachable(_) | TransportError::Timeout => true,
            TransportError::Status { code, .. } => *code == 429 || *code >= 500,
            TransportError::Protocol(_) => false,
        }
    }
}

/// Joins a server root with an OpenAI-style route, leaving URLs that
/// already name the route untouched.
pub(crate) fn endpoint(base: &str, route: &str) -> String {
    let base = base.trim_end_matches('/');
    let tail = route.trim_start_matches("/v1");
    if base.ends_with(tail) {
        base.to_string()
    } else if base.ends_with("/v1") {
        format!("{base}{tail}")
    } else {
        format!("{base}{route}")
    }
}

pub(crate) fn agent(timeout_ms: u64) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(Duration::from_millis(timeout_ms)).build()
}

pub(crate) fn post_json<B: Serialize>(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &B,
) -> Result<Value, TransportError> {
    let mut req = agent.post(url).set("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    match req.send_json(body) {
        Ok(resp) => resp
            .into_json::<Value>()
            .map_err(|e| TransportError::Protocol(e.to_string())),
        Err(ureq::Error::Status(code, resp)) => Err(TransportError::Status {
            code,
            body: resp.into_string().unwrap_or_default(),
        }),
        Err(ureq::Error::Transport(t)) => {
            let timed_out = std::error::Error::source(&t)
                .and_then(|s| s.downcast_ref::<std::io::Error>())
                .is_some_and(|io| matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock));
            if timed_out || t.to_string().contains("timed out") {
                Err(TransportError::Timeout)
            } else {
                Err(TransportError::Unreachable(t.to_string()))
            }
        }
    }
}

/// Exponential backoff before transport retry `retry` (1-based), capped at
/// eight times the base.
pub(crate) fn backoff(base_ms: u64, retry: u32) -> Duration {
    Duration::from_millis(base_ms.saturating_mul(1 << (retry.saturating_sub(1)).min(3)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_joining() {
        assert_eq!(endpoint("http://h:1", "/v1/embeddings"), "http://h:1/v1/embeddings");
        assert_eq!(endpoint("http://h:1/", "/v1/embeddings"), "http://h:1/v1/embeddings");
        assert_eq!(endpoint("http://h:1/v1", "/v1/embeddings"), "http://h:1/v1/embeddings");
        assert_eq!(
            endpoint("http://h:1/api/v1/chat/completions", "/v1/chat/completions"),
            "http://h:1/api/v1/chat/completions"
        );
    }

    #[test]
    fn retry_classes() {
        assert!(TransportError::Timeout.is_retryable());
        assert!(TransportError::Status { code: 503, body: String::new() }.is_retryable());
        assert!(TransportError::Status { code: 429, body: String::new() }.is_retryable());
        assert!(!TransportError::Status { code: 401, body: String::new() }.is_retryable());
        assert!(!TransportError::Protocol("x".into()).is_retryable());
    }

    #[test]
    fn backoff_caps() {
        assert_eq!(backoff(10, 1), Duration::from_millis(10));
        assert_eq!(backoff(10, 2), Duration::from_millis(20));
        assert_eq!(backoff(10, 9), Duration::from_millis(80));
        assert_eq!(backoff(0, 5), Duration::ZERO);
    }
}
