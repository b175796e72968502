//! Offline stand-ins for the two endpoints plus naive reference
//! implementations of the retrieval math.
//!
//! Every mock decision is a pure function of the profile seed and the
//! request (caption text, attempt, transport try), so runs are reproducible
//! regardless of thread scheduling.

mod mock;
pub mod oracle;
mod server;
mod toy;

pub use mock::{
    mock_embed, mock_rewrite, mock_transport_fault, MockChatBackend, MockEmbedBackend, MOCK_EMBED_DIM,
    MOCK_EMBED_VERSION,
};
pub use server::{MockServer, ServerOptions};
pub use toy::{toy_corpus, toy_corpus_json};

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParaphraseQuality {
    /// Rewords the caption but keeps every content word.
    #[default]
    Faithful,
    /// Drops and replaces content words, so similarity varies widely.
    Noisy,
    /// Always garbled, non-Latin output.
    Garbage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub base_ms: u64,
    /// Extra delay drawn uniformly from `0..=jitter_ms` per call.
    pub jitter_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockProfile {
    pub seed: u64,
    pub paraphrase_quality: ParaphraseQuality,
    /// Probability a transport try fails with a retryable 503.
    pub failure_rate: f64,
    /// Probability a completion is replaced by garbled text.
    pub garbage_rate: f64,
    /// Draw garbage once per caption instead of once per attempt, so an
    /// affected caption never produces a usable rewrite.
    pub sticky_garbage: bool,
    pub latency: Option<LatencyModel>,
}

impl Default for MockProfile {
    fn default() -> Self {
        MockProfile {
            seed: 0,
            paraphrase_quality: ParaphraseQuality::Faithful,
            failure_rate: 0.0,
            garbage_rate: 0.0,
            sticky_garbage: false,
            latency: None,
        }
    }
}

impl MockProfile {
    pub fn faithful(seed: u64) -> Self {
        MockProfile {
            seed,
            ..Self::default()
        }
    }

    /// Faithful rewrites with 10% garbled completions and 5% transport
    /// faults, both drawn per attempt.
    pub fn desk_run(seed: u64) -> Self {
        MockProfile {
            seed,
            garbage_rate: 0.10,
            failure_rate: 0.05,
            ..Self::default()
        }
    }

    /// 10% of captions only ever produce garbage.
    pub fn adversarial(seed: u64) -> Self {
        MockProfile {
            seed,
            garbage_rate: 0.10,
            sticky_garbage: true,
            ..Self::default()
        }
    }

    pub(crate) fn delay(&self, parts: &[&[u8]]) -> Option<Duration> {
        let l = self.latency?;
        let jitter = if l.jitter_ms == 0 {
            0
        } else {
            crate::stable_hash::hash_u64(parts) % (l.jitter_ms + 1)
        };
        Some(Duration::from_millis(l.base_ms + jitter))
    }
}
