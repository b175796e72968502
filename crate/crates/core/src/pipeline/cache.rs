//! Append-only JSONL cache of rewrite attempts and terminal outcomes.
//!
//! Two line kinds share the file:
//!
//! * `{"kind":"attempt", ...}` one per judged (or sanitizer-rejected)
//!   rewrite, unique per `(text_id, attempt)`;
//! * `{"kind":"outcome", ...}` written once a caption is accepted or falls
//!   back to the original.
//!
//! State is rebuilt by replaying the file. A final line without its newline
//! is a torn write from an interrupted run; it is dropped and the file is
//! truncated before the next append. Any other unparseable line is an error.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::faithfulness::{AugmentationOutcome, OutcomeStatus, PriorAttempt};
use crate::llm_gateway::SanitizeRejection;

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub text_id: String,
    pub attempt: u32,
    /// Sanitized candidate; empty when the sanitizer rejected the completion.
    pub candidate_text: String,
    pub raw_completion: String,
    pub rejection: Option<SanitizeRejection>,
    pub similarity: Option<f64>,
    pub accepted: bool,
    pub alpha: f64,
    pub model_id: String,
    pub embed_model_id: String,
    pub prompt_hash: String,
    pub transport_tries: u32,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEntry {
    pub text_id: String,
    pub status: OutcomeStatus,
    pub final_text: String,
    pub similarity: Option<f64>,
    pub attempts_used: u32,
    pub timestamp_ms: u64,
}

impl OutcomeEntry {
    pub fn from_outcome(o: &AugmentationOutcome) -> Self {
        OutcomeEntry {
            text_id: o.text_id.clone(),
            status: o.status,
            final_text: o.final_text.clone(),
            similarity: o.similarity,
            attempts_used: o.attempts_used,
            timestamp_ms: now_ms(),
        }
    }

    pub fn to_outcome(&self) -> AugmentationOutcome {
        AugmentationOutcome {
            text_id: self.text_id.clone(),
            status: self.status,
            final_text: self.final_text.clone(),
            similarity: self.similarity,
            attempts_used: self.attempts_used,
            rejected_candidates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CacheLine {
    Attempt(CacheEntry),
    Outcome(OutcomeEntry),
}

impl CacheLine {
    pub fn text_id(&self) -> &str {
        match self {
            CacheLine::Attempt(e) => &e.text_id,
            CacheLine::Outcome(o) => &o.text_id,
        }
    }

    /// The same line with its timestamp zeroed.
    pub fn without_timestamp(&self) -> CacheLine {
        let mut line = self.clone();
        match &mut line {
            CacheLine::Attempt(e) => e.timestamp_ms = 0,
            CacheLine::Outcome(o) => o.timestamp_ms = 0,
        }
        line
    }
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Replayed cache contents.
#[derive(Debug, Default, Clone)]
pub struct CacheState {
    pub lines: Vec<CacheLine>,
    attempts: HashMap<String, BTreeMap<u32, usize>>,
    outcomes: HashMap<String, usize>,
    /// Byte length of the well-formed prefix.
    valid_len: u64,
}

impl CacheState {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let mut raw = Vec::new();
        match File::open(path) {
            Ok(mut f) => {
                f.read_to_end(&mut raw)?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(e.into()),
        }
        Self::parse(&raw)
    }

    pub fn parse(raw: &[u8]) -> Result<Self, PipelineError> {
        let mut state = CacheState::default();
        let mut offset = 0usize;
        for (n, chunk) in raw.split_inclusive(|b| *b == b'\n').enumerate() {
            let line_no = n + 1;
            let complete = chunk.ends_with(b"\n");
            let body = chunk.strip_suffix(b"\n").unwrap_or(chunk);
            let parsed = std::str::from_utf8(body)
                .map_err(|e| e.to_string())
                .and_then(|s| {
                    if s.trim().is_empty() {
                        Ok(None)
                    } else {
                        serde_json::from_str::<CacheLine>(s).map(Some).map_err(|e| e.to_string())
                    }
                });
            match parsed {
                Ok(Some(line)) if complete => state.push(line, line_no)?,
                Ok(None) if complete => {}
                Err(message) if complete => return Err(PipelineError::CorruptCache { line: line_no, message }),
                _ => {
                    log::warn!("cache line {line_no} is incomplete; dropping torn write");
                    break;
                }
            }
            offset += chunk.len();
        }
        state.valid_len = offset as u64;
        Ok(state)
    }

    fn push(&mut self, line: CacheLine, line_no: usize) -> Result<(), PipelineError> {
        let index = self.lines.len();
        match &line {
            CacheLine::Attempt(e) => {
                let by_attempt = self.attempts.entry(e.text_id.clone()).or_default();
                if by_attempt.insert(e.attempt, index).is_some() {
                    return Err(PipelineError::CorruptCache {
                        line: line_no,
                        message: format!("duplicate attempt {} for {}", e.attempt, e.text_id),
                    });
                }
            }
            CacheLine::Outcome(o) => {
                if self.outcomes.insert(o.text_id.clone(), index).is_some() {
                    return Err(PipelineError::CorruptCache {
                        line: line_no,
                        message: format!("second outcome for {}", o.text_id),
                    });
                }
            }
        }
        self.lines.push(line);
        Ok(())
    }

    pub fn valid_len(&self) -> u64 {
        self.valid_len
    }

    pub fn outcome(&self, text_id: &str) -> Option<&OutcomeEntry> {
        self.outcomes.get(text_id).map(|i| match &self.lines[*i] {
            CacheLine::Outcome(o) => o,
            CacheLine::Attempt(_) => unreachable!("outcome index points at an outcome line"),
        })
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &OutcomeEntry> {
        self.lines.iter().filter_map(|l| match l {
            CacheLine::Outcome(o) => Some(o),
            CacheLine::Attempt(_) => None,
        })
    }

    pub fn attempts(&self) -> impl Iterator<Item = &CacheEntry> {
        self.lines.iter().filter_map(|l| match l {
            CacheLine::Attempt(e) => Some(e),
            CacheLine::Outcome(_) => None,
        })
    }

    /// Attempts recorded for `text_id`, in attempt order.
    pub fn attempts_for(&self, text_id: &str) -> Vec<&CacheEntry> {
        self.attempts
            .get(text_id)
            .map(|m| {
                m.values()
                    .map(|i| match &self.lines[*i] {
                        CacheLine::Attempt(e) => e,
                        CacheLine::Outcome(_) => unreachable!("attempt index points at an attempt line"),
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn prior_attempts(&self, text_id: &str) -> Vec<PriorAttempt> {
        self.attempts_for(text_id)
            .into_iter()
            .map(|e| PriorAttempt {
                attempt: e.attempt,
                candidate_text: if e.rejection.is_some() {
                    e.raw_completion.clone()
                } else {
                    e.candidate_text.clone()
                },
                similarity: e.similarity,
                accepted: e.accepted,
            })
            .collect()
    }

    /// Lines with timestamps zeroed, serialized and sorted: equal for two
    /// caches holding the same entries in any order.
    pub fn canonical_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .lines
            .iter()
            .map(|l| serde_json::to_string(&l.without_timestamp()).expect("cache line serializes"))
            .collect();
        out.sort();
        out
    }
}

/// Appends lines, flushing each so a crash loses at most the line in flight.
pub struct CacheWriter {
    out: BufWriter<File>,
}

impl CacheWriter {
    /// Opens `path` for appending after cutting it back to `valid_len` bytes.
    pub fn open(path: &Path, valid_len: u64) -> Result<Self, PipelineError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() > valid_len {
            file.set_len(valid_len)?;
        }
        Ok(CacheWriter {
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, line: &CacheLine) -> Result<(), PipelineError> {
        serde_json::to_writer(&mut self.out, line).map_err(std::io::Error::other)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), PipelineError> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attempt(text_id: &str, attempt: u32, accepted: bool) -> CacheLine {
        CacheLine::Attempt(CacheEntry {
            text_id: text_id.into(),
            attempt,
            candidate_text: "c".into(),
            raw_completion: "c".into(),
            rejection: None,
            similarity: Some(if accepted { 0.9 } else { 0.1 }),
            accepted,
            alpha: 0.6,
            model_id: "m".into(),
            embed_model_id: "e".into(),
            prompt_hash: "h".into(),
            transport_tries: 1,
            timestamp_ms: 123,
        })
    }

    fn encode(lines: &[CacheLine]) -> Vec<u8> {
        let mut out = Vec::new();
        for l in lines {
            out.extend(serde_json::to_vec(l).unwrap());
            out.push(b'\n');
        }
        out
    }

    #[test]
    fn replay_indexes_attempts_and_outcomes() {
        let lines = vec![
            attempt("a", 1, false),
            attempt("b", 1, true),
            attempt("a", 2, true),
            CacheLine::Outcome(OutcomeEntry {
                text_id: "a".into(),
                status: OutcomeStatus::Accepted,
                final_text: "c".into(),
                similarity: Some(0.9),
                attempts_used: 2,
                timestamp_ms: 5,
            }),
        ];
        let state = CacheState::parse(&encode(&lines)).unwrap();
        assert_eq!(state.attempts_for("a").len(), 2);
        assert!(state.outcome("a").is_some());
        assert!(state.outcome("b").is_none());
        assert!(state.prior_attempts("b")[0].accepted);
    }

    #[test]
    fn corrupt_line_is_named() {
        let mut raw = encode(&[attempt("a", 1, false)]);
        raw.extend(b"{not json}\n");
        raw.extend(encode(&[attempt("a", 2, false)]));
        match CacheState::parse(&raw) {
            Err(PipelineError::CorruptCache { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_attempt_is_corruption() {
        let raw = encode(&[attempt("a", 1, false), attempt("a", 1, false)]);
        assert!(matches!(CacheState::parse(&raw), Err(PipelineError::CorruptCache { line: 2, .. })));
    }

    #[test]
    fn torn_tail_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let mut raw = encode(&[attempt("a", 1, false)]);
        let good = raw.len() as u64;
        raw.extend(b"{\"kind\":\"attempt\",\"text_");
        std::fs::write(&path, &raw).unwrap();

        let state = CacheState::load(&path).unwrap();
        assert_eq!(state.lines.len(), 1);
        assert_eq!(state.valid_len(), good);

        let mut w = CacheWriter::open(&path, state.valid_len()).unwrap();
        w.append(&attempt("a", 2, true)).unwrap();
        w.finish().unwrap();
        let state = CacheState::load(&path).unwrap();
        assert_eq!(state.lines.len(), 2);
    }

    #[test]
    fn missing_file_is_empty_state() {
        let dir = tempfile::tempdir().unwrap();
        let state = CacheState::load(&dir.path().join("nope.jsonl")).unwrap();
        assert!(state.lines.is_empty());
    }

    #[test]
    fn canonical_lines_ignore_order_and_time() {
        let a = CacheState::parse(&encode(&[attempt("a", 1, false), attempt("b", 1, true)])).unwrap();
        let mut later = attempt("b", 1, true);
        if let CacheLine::Attempt(e) = &mut later {
            e.timestamp_ms = 999;
        }
        let b = CacheState::parse(&encode(&[later, attempt("a", 1, false)])).unwrap();
        assert_eq!(a.canonical_lines(), b.canonical_lines());
    }
}
