//! Text faithfulness filter.
//!
//! A rewrite is kept only if the cosine similarity between its sentence
//! embedding and the original's is at least `alpha` (ties accept). Rejected
//! rewrites are discarded and the LLM is asked again, up to `max_attempts`
//! times; when the budget runs out the original caption is kept.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CaptionRecord;
use crate::embed_gateway::{cosine_similarity, EmbedGateway, Embedding};
use crate::llm_gateway::{GatewayError, LlmGateway, RewriteCandidate};

pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessVerdict {
    pub text_id: String,
    pub attempt: u32,
    pub similarity: f64,
    pub accepted: bool,
    pub alpha: f64,
}

impl FaithfulnessVerdict {
    pub fn new(text_id: impl Into<String>, attempt: u32, similarity: f64, alpha: f64) -> Self {
        FaithfulnessVerdict {
            text_id: text_id.into(),
            attempt,
            similarity,
            accepted: similarity >= alpha,
            alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaithfulnessError {
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("texts to judge must be non-empty")]
    EmptyText,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl FaithfulnessError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, FaithfulnessError::Gateway(e) if e.is_retryable())
    }
}

fn check_alpha(alpha: f64) -> Result<(), FaithfulnessError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(FaithfulnessError::InvalidAlpha(alpha))
    }
}

/// Embeds both texts and compares their cosine similarity against `alpha`.
pub fn judge(
    embedder: &EmbedGateway,
    text_id: &str,
    attempt: u32,
    original_text: &str,
    candidate_text: &str,
    alpha: f64,
) -> Result<FaithfulnessVerdict, FaithfulnessError> {
    check_alpha(alpha)?;
    if original_text.trim().is_empty() || candidate_text.trim().is_empty() {
        return Err(FaithfulnessError::EmptyText);
    }
    let pair = embedder.embed(&[original_text.to_string(), candidate_text.to_string()], 2)?;
    verdict_for(&pair[0], &pair[1], text_id, attempt, alpha)
}

fn verdict_for(
    original: &Embedding,
    candidate: &Embedding,
    text_id: &str,
    attempt: u32,
    alpha: f64,
) -> Result<FaithfulnessVerdict, FaithfulnessError> {
    let similarity =
        cosine_similarity(original, candidate).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    Ok(FaithfulnessVerdict::new(text_id, attempt, similarity, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Accepted,
    FallbackOriginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub attempt: u32,
    /// Sanitized text, or the raw completion when sanitization failed.
    pub text: String,
    /// `None` when sanitization rejected the completion before judging.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationOutcome {
    pub text_id: String,
    pub status: OutcomeStatus,
    pub final_text: String,
    pub similarity: Option<f64>,
    pub attempts_used: u32,
    pub rejected_candidates: Vec<RejectedCandidate>,
}

impl AugmentationOutcome {
    pub fn augmented_text(&self) -> Option<&str> {
        (self.status == OutcomeStatus::Accepted).then_some(self.final_text.as_str())
    }
}

/// A record that could not reach a terminal outcome.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{text_id}: aborted after {attempts_used} attempts: {source}")]
pub struct AugmentError {
    pub text_id: String,
    pub attempts_used: u32,
    #[source]
    pub source: FaithfulnessError,
}

impl AugmentError {
    pub fn is_retryable(&self) -> bool {
        self.source.is_retryable()
    }
}

#[derive(Clone)]
pub struct Gateways {
    pub llm: Arc<LlmGateway>,
    pub embedder: Arc<EmbedGateway>,
}

/// Everything observed for one rewrite attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptRecord {
    pub candidate: RewriteCandidate,
    /// `None` when sanitization rejected the completion.
    pub verdict: Option<FaithfulnessVerdict>,
}

/// An attempt already completed in an earlier, interrupted run.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorAttempt {
    pub attempt: u32,
    pub candidate_text: String,
    pub similarity: Option<f64>,
    pub accepted: bool,
}

/// Rewrite, sanitize, judge; repeat until accepted or `max_attempts` is spent.
pub fn augment_with_retry(
    record: &CaptionRecord,
    alpha: f64,
    max_attempts: u32,
    gateways: &Gateways,
) -> Result<AugmentationOutcome, AugmentError> {
    augment_resuming(record, alpha, max_attempts, gateways, &[], &mut |_| {})
}

/// [`augment_with_retry`] continuing after `prior` attempts, reporting each
/// new attempt to `sink` as soon as it is judged.
pub fn augment_resuming(
    record: &CaptionRecord,
    alpha: f64,
    max_attempts: u32,
    gateways: &Gateways,
    prior: &[PriorAttempt],
    sink: &mut dyn FnMut(&AttemptRecord),
) -> Result<AugmentationOutcome, AugmentError> {
    assert!(max_attempts >= 1, "max_attempts must be at least 1");
    let fail = |attempts_used: u32, source: FaithfulnessError| AugmentError {
        text_id: record.text_id.clone(),
        attempts_used,
        source,
    };
    check_alpha(alpha).map_err(|e| fail(0, e))?;

    let mut rejected: Vec<RejectedCandidate> = Vec::new();
    let mut prior: Vec<&PriorAttempt> = prior.iter().collect();
    prior.sort_by_key(|p| p.attempt);
    for p in &prior {
        if p.accepted {
            return Ok(AugmentationOutcome {
                text_id: record.text_id.clone(),
                status: OutcomeStatus::Accepted,
                final_text: p.candidate_text.clone(),
                similarity: p.similarity,
                attempts_used: p.attempt,
                rejected_candidates: rejected,
            });
        }
        rejected.push(RejectedCandidate {
            attempt: p.attempt,
            text: p.candidate_text.clone(),
            similarity: p.similarity,
        });
    }

    let first = prior.last().map_or(1, |p| p.attempt + 1);
    let mut original_embedding: Option<Embedding> = None;
    for attempt in first..=max_attempts {
        let completed = attempt - 1;
        let candidate = gateways
            .llm
            .rewrite(record, attempt)
            .map_err(|e| fail(completed, e.into()))?;

        let verdict = if candidate.is_usable() {
            if original_embedding.is_none() {
                let e = gateways.embedder.embed_one(&record.text).map_err(|e| fail(completed, e.into()))?;
                original_embedding = Some(e);
            }
            let cand = gateways
                .embedder
                .embed_one(&candidate.candidate_text)
                .map_err(|e| fail(completed, e.into()))?;
            let original = original_embedding.as_ref().expect("embedded above");
            Some(verdict_for(original, &cand, &record.text_id, attempt, alpha).map_err(|e| fail(completed, e))?)
        } else {
            None
        };

        let entry = AttemptRecord { candidate, verdict };
        sink(&entry);
        let AttemptRecord { candidate, verdict } = entry;
        match verdict {
            Some(v) if v.accepted => {
                return Ok(AugmentationOutcome {
                    text_id: record.text_id.clone(),
                    status: OutcomeStatus::Accepted,
                    final_text: candidate.candidate_text,
                    similarity: Some(v.similarity),
                    attempts_used: attempt,
                    rejected_candidates: rejected,
                })
            }
            Some(v) => rejected.push(RejectedCandidate {
                attempt,
                text: candidate.candidate_text,
                similarity: Some(v.similarity),
            }),
            None => rejected.push(RejectedCandidate {
                attempt,
                text: candidate.raw_completion,
                similarity: None,
            }),
        }
    }

    Ok(AugmentationOutcome {
        text_id: record.text_id.clone(),
        status: OutcomeStatus::FallbackOriginal,
        final_text: record.text.clone(),
        similarity: None,
        attempts_used: (first - 1).max(max_attempts),
        rejected_candidates: rejected,
    })
}

/// Number of verdict similarities at or above `alpha`.
pub fn acceptance_count(similarities: &[f64], alpha: f64) -> usize {
    similarities.iter().filter(|s| **s >= alpha).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub count: usize,
}

/// Distribution of first-attempt similarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    pub bin_width: f64,
    /// Non-empty bins in ascending order of lower edge.
    pub bins: Vec<HistogramBin>,
    pub total: usize,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl SimilarityHistogram {
    /// Builds a histogram over raw similarity values; bins are half-open
    /// `[k·w, (k+1)·w)`.
    pub fn from_similarities(similarities: &[f64], bin_width: f64) -> Self {
        assert!(
            bin_width > 0.0 && bin_width <= 1.0,
            "bin_width must lie in (0, 1], got {bin_width}"
        );
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for s in similarities {
            *counts.entry(bin_index(*s, bin_width)).or_default() += 1;
        }
        let mut sorted = similarities.to_vec();
        sorted.sort_by(f64::total_cmp);
        SimilarityHistogram {
            bin_width,
            bins: counts
                .into_iter()
                .map(|(k, count)| HistogramBin {
                    lower: (k as f64 * bin_width * 1e12).round() / 1e12,
                    count,
                })
                .collect(),
            total: similarities.len(),
            sorted,
        }
    }

    /// Fraction of values `>= threshold`; 0 for an empty histogram.
    pub fn fraction_at_or_above(&self, threshold: f64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let below = self.sorted.partition_point(|s| *s < threshold);
        (self.total - below) as f64 / self.total as f64
    }
}

/// Bin `k` with `k·w <= s < (k+1)·w`. Quotients within 1e-9 of an integer
/// snap to it, so a value printed as an edge (0.3 at width 0.1) opens the
/// upper bin despite rounding in `s / w`.
fn bin_index(s: f64, w: f64) -> i64 {
    let q = s / w;
    let nearest = q.round();
    if (q - nearest).abs() < 1e-9 {
        nearest as i64
    } else {
        q.floor() as i64
    }
}

/// Histogram of the first-attempt verdicts in `verdicts`.
pub fn similarity_histogram(verdicts: &[FaithfulnessVerdict], bin_width: f64) -> SimilarityHistogram {
    let firsts: Vec<f64> = verdicts.iter().filter(|v| v.attempt == 1).map(|v| v.similarity).collect();
    SimilarityHistogram::from_similarities(&firsts, bin_width)
}
