//! Run statistics rebuilt from a cache.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::faithfulness::{OutcomeStatus, SimilarityHistogram};

use super::cache::CacheState;

pub const REPORT_BIN_WIDTH: f64 = 0.05;
pub const REPORT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptStats {
    pub attempt: u32,
    /// Records that reached this attempt.
    pub reached: usize,
    pub accepted: usize,
    /// `accepted / reached`, 0 when nothing reached it.
    pub acceptance_rate: f64,
    /// Records accepted at or before this attempt, over all terminal records.
    pub cumulative_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Terminal records plus those listed in `incomplete_text_ids`.
    pub records: usize,
    pub accepted: usize,
    pub fallback: usize,
    /// Selected records still lacking a terminal outcome, e.g. after a
    /// gateway error aborted the run.
    pub incomplete: usize,
    pub incomplete_text_ids: Vec<String>,
    pub acceptance_rate: f64,
    pub fallback_rate: f64,
    /// Attempts used per terminal record, keyed by attempt count.
    pub attempt_distribution: BTreeMap<u32, usize>,
    pub acceptance_curve: Vec<AttemptStats>,
    pub first_attempt_verdicts: usize,
    pub threshold: f64,
    pub fraction_first_attempt_at_or_above: f64,
    pub histogram: SimilarityHistogram,
    pub cache_lines: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl RunReport {
    /// Statistics over everything in `cache`. Ids in `selected` without a
    /// terminal outcome are reported as incomplete.
    pub fn from_cache(cache: &CacheState, selected: &[String]) -> Self {
        let mut accepted = 0;
        let mut fallback = 0;
        let mut attempt_distribution = BTreeMap::new();
        let mut accepted_at = BTreeMap::<u32, usize>::new();
        let mut terminal = BTreeSet::new();
        for o in cache.outcomes() {
            terminal.insert(o.text_id.as_str());
            match o.status {
                OutcomeStatus::Accepted => {
                    accepted += 1;
                    *accepted_at.entry(o.attempts_used).or_default() += 1;
                }
                OutcomeStatus::FallbackOriginal => fallback += 1,
            }
            *attempt_distribution.entry(o.attempts_used).or_default() += 1;
        }

        let mut incomplete_text_ids: Vec<String> =
            selected.iter().filter(|id| !terminal.contains(id.as_str())).cloned().collect();
        incomplete_text_ids.sort();
        incomplete_text_ids.dedup();
        let total = terminal.len();

        let mut reached = BTreeMap::<u32, usize>::new();
        for e in cache.attempts() {
            if terminal.contains(e.text_id.as_str()) {
                *reached.entry(e.attempt).or_default() += 1;
            }
        }
        let mut cumulative = 0;
        let acceptance_curve = reached
            .iter()
            .map(|(&attempt, &reached)| {
                let acc = accepted_at.get(&attempt).copied().unwrap_or(0);
                cumulative += acc;
                AttemptStats {
                    attempt,
                    reached,
                    accepted: acc,
                    acceptance_rate: ratio(acc, reached),
                    cumulative_acceptance: ratio(cumulative, total),
                }
            })
            .collect();

        let first: Vec<f64> = cache
            .attempts()
            .filter(|e| e.attempt == 1)
            .filter_map(|e| e.similarity)
            .collect();
        let histogram = SimilarityHistogram::from_similarities(&first, REPORT_BIN_WIDTH);

        RunReport {
            records: total + incomplete_text_ids.len(),
            accepted,
            fallback,
            incomplete: incomplete_text_ids.len(),
            incomplete_text_ids,
            acceptance_rate: ratio(accepted, total),
            fallback_rate: ratio(fallback, total),
            attempt_distribution,
            acceptance_curve,
            first_attempt_verdicts: first.len(),
            threshold: REPORT_THRESHOLD,
            fraction_first_attempt_at_or_above: histogram.fraction_at_or_above(REPORT_THRESHOLD),
            histogram,
            cache_lines: cache.lines.len(),
        }
    }
}
