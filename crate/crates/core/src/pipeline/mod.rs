//! The end-to-end flow: augment captions into a cache, then materialize
//! per-epoch training manifests from it.

pub mod cache;
pub mod config;
pub mod report;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;

use thiserror::Error;

use crate::corpus::{parse_annotations_with, validate_corpus, CaptionRecord, CorpusReport};
use crate::embed_gateway::EmbedGateway;
use crate::faithfulness::{augment_resuming, AttemptRecord, AugmentError, Gateways};
use crate::llm_gateway::LlmGateway;
use crate::sampler::{materialize_epoch_with, SamplerError};
use crate::testkit::{MockChatBackend, MockEmbedBackend};

pub use cache::{CacheEntry, CacheLine, CacheState, CacheWriter, OutcomeEntry};
pub use config::PipelineConfig;
pub use report::{AttemptStats, RunReport, REPORT_BIN_WIDTH, REPORT_THRESHOLD};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("cache line {line} is corrupt: {message}")]
    CorruptCache { line: usize, message: String },
    #[error("no augmentation outcome for {} records: {}", .0.len(), .0.join(", "))]
    MissingOutcomes(Vec<String>),
    #[error("run aborted: {message}")]
    Aborted { message: String, report: Box<RunReport> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// 2 for configuration problems, 3 for gateway failures, 4 for bad data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Aborted { .. } => 3,
            PipelineError::Data(_)
            | PipelineError::CorruptCache { .. }
            | PipelineError::MissingOutcomes(_)
            | PipelineError::Io(_) => 4,
        }
    }
}

/// Mock backends when `config.mock` is set, HTTP clients otherwise.
pub fn build_gateways(config: &PipelineConfig) -> Gateways {
    if config.mock {
        let chat = Arc::new(MockChatBackend::new(config.mock_profile));
        let embed = Arc::new(MockEmbedBackend::new());
        Gateways {
            llm: Arc::new(LlmGateway::new(chat, config.llm.clone(), config.template.clone())),
            embedder: Arc::new(EmbedGateway::new(embed, config.embedder.clone())),
        }
    } else {
        Gateways {
            llm: Arc::new(LlmGateway::http(config.llm.clone(), config.template.clone())),
            embedder: Arc::new(EmbedGateway::http(config.embedder.clone())),
        }
    }
}

/// Parses and validates the configured corpus. Duplicate ids, duplicate
/// (image, caption) pairs and empty captions are data errors.
pub fn load_corpus(config: &PipelineConfig) -> Result<(Vec<CaptionRecord>, CorpusReport), PipelineError> {
    let raw = std::fs::read(&config.corpus_path)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", config.corpus_path.display())))?;
    let records = parse_annotations_with(&raw, config.corpus_format, &config.field_map)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", config.corpus_path.display())))?;
    let report = validate_corpus(&records);
    Ok((records, report))
}

fn load_clean_corpus(config: &PipelineConfig) -> Result<Vec<CaptionRecord>, PipelineError> {
    let (records, report) = load_corpus(config)?;
    if !report.is_clean() {
        return Err(PipelineError::Data(format!(
            "corpus failed validation: {} duplicate ids, {} empty captions, {} duplicate pairs",
            report.duplicate_text_ids.len(),
            report.empty_captions.len(),
            report.duplicate_pairs.len()
        )));
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop after this many records reach an outcome in this run.
    pub limit: Option<usize>,
    /// Continue from the existing cache; otherwise it is truncated first.
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            limit: None,
            resume: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentRun {
    /// Records that reached a terminal outcome during this run.
    pub processed: usize,
    pub report: RunReport,
}

fn cache_entry(record: &AttemptRecord, alpha: f64, embed_model_id: &str) -> CacheEntry {
    let c = &record.candidate;
    CacheEntry {
        text_id: c.text_id.clone(),
        attempt: c.attempt,
        candidate_text: c.candidate_text.clone(),
        raw_completion: c.raw_completion.clone(),
        rejection: c.rejection,
        similarity: record.verdict.as_ref().map(|v| v.similarity),
        accepted: record.verdict.as_ref().is_some_and(|v| v.accepted),
        alpha,
        model_id: c.model_id.clone(),
        embed_model_id: embed_model_id.to_string(),
        prompt_hash: c.prompt_hash.clone(),
        transport_tries: c.transport_tries,
        timestamp_ms: cache::now_ms(),
    }
}

/// Augments every selected-split record lacking a terminal outcome in the
/// cache, streaming attempts and outcomes to it as they complete.
///
/// Any gateway error stops new records from being started; records already
/// in flight finish, and the run returns [`PipelineError::Aborted`] with the
/// partial report. The cache stays valid for a later resume.
pub fn run_augment(
    config: &PipelineConfig,
    gateways: &Gateways,
    options: &RunOptions,
) -> Result<AugmentRun, PipelineError> {
    config.validate()?;
    let corpus = load_clean_corpus(config)?;
    let selected: Vec<&CaptionRecord> =
        corpus.iter().filter(|r| config.splits_to_augment.contains(&r.split)).collect();
    let selected_ids: Vec<String> = selected.iter().map(|r| r.text_id.clone()).collect();

    if !options.resume && config.cache_path.exists() {
        log::warn!("discarding existing cache {}", config.cache_path.display());
        std::fs::write(&config.cache_path, b"")?;
    }
    let state = CacheState::load(&config.cache_path)?;
    let mut pending: Vec<&CaptionRecord> =
        selected.iter().copied().filter(|r| state.outcome(&r.text_id).is_none()).collect();
    if let Some(limit) = options.limit {
        pending.truncate(limit);
    }
    log::info!(
        "{} selected records, {} already terminal, {} to process",
        selected.len(),
        selected.len() - selected.iter().filter(|r| state.outcome(&r.text_id).is_none()).count(),
        pending.len()
    );

    let mut writer = CacheWriter::open(&config.cache_path, state.valid_len())?;
    let next = AtomicUsize::new(0);
    let processed = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let errors: Mutex<Vec<AugmentError>> = Mutex::new(Vec::new());
    let embed_model_id = gateways.embedder.model_id().to_string();
    let workers = config.worker_count.min(pending.len()).max(1);

    let write_result = thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<CacheLine>();
        let abort_ref = &abort;
        let writer_handle = s.spawn(move || -> Result<(), PipelineError> {
            for line in rx {
                if let Err(e) = writer.append(&line) {
                    abort_ref.store(true, Ordering::SeqCst);
                    return Err(e);
                }
            }
            writer.finish()
        });

        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, state, next, processed, abort, errors, embed_model_id) =
                (&pending, &state, &next, &processed, &abort, &errors, &embed_model_id);
            s.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = pending.get(i) else { break };
                let prior = state.prior_attempts(&record.text_id);
                let mut sink = |a: &AttemptRecord| {
                    if tx.send(CacheLine::Attempt(cache_entry(a, config.alpha, embed_model_id))).is_err() {
                        abort.store(true, Ordering::SeqCst);
                    }
                };
                match augment_resuming(record, config.alpha, config.max_attempts, gateways, &prior, &mut sink) {
                    Ok(outcome) => {
                        if tx.send(CacheLine::Outcome(OutcomeEntry::from_outcome(&outcome))).is_err() {
                            abort.store(true, Ordering::SeqCst);
                            break;
                        }
                        processed.fetch_add(1, Ordering::SeqCst);
                    }
                    Err(e) => {
                        log::error!("{e}");
                        abort.store(true, Ordering::SeqCst);
                        errors.lock().unwrap_or_else(|p| p.into_inner()).push(e);
                        break;
                    }
                }
            });
        }
        drop(tx);
        writer_handle.join().expect("cache writer panicked")
    });
    write_result?;

    let state = CacheState::load(&config.cache_path)?;
    let report = RunReport::from_cache(&state, &selected_ids);
    let errors = errors.into_inner().unwrap_or_else(|p| p.into_inner());
    if let Some(first) = errors.first() {
        return Err(PipelineError::Aborted {
            message: format!("{first} ({} record(s) failed)", errors.len()),
            report: Box::new(report),
        });
    }
    Ok(AugmentRun {
        processed: processed.into_inner(),
        report,
    })
}

/// Manifest file name for `epoch`.
pub fn manifest_path(output_dir: &Path, epoch: u32) -> PathBuf {
    output_dir.join(format!("epoch_{epoch:03}.jsonl"))
}

/// Writes one manifest per epoch `0..config.epochs` from the cached outcomes.
pub fn run_sample(config: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    config.validate()?;
    let corpus = load_clean_corpus(config)?;
    let state = CacheState::load(&config.cache_path)?;
    let ids: HashSet<&str> = corpus.iter().map(|r| r.text_id.as_str()).collect();
    let outcomes: HashMap<String, _> = state
        .outcomes()
        .filter(|o| ids.contains(o.text_id.as_str()))
        .map(|o| (o.text_id.clone(), o.to_outcome()))
        .collect();

    let mut manifests = Vec::new();
    for epoch in 0..config.epochs {
        let manifest =
            materialize_epoch_with(&corpus, &outcomes, epoch, config.beta, config.seed, config.draw_policy)
                .map_err(|e| match e {
                    SamplerError::MissingOutcomes(ids) => PipelineError::MissingOutcomes(ids),
                    SamplerError::InvalidBeta(_) => PipelineError::Config(e.to_string()),
                    other => PipelineError::Data(other.to_string()),
                })?;
        manifests.push(manifest);
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let mut paths = Vec::new();
    for manifest in &manifests {
        let path = manifest_path(&config.output_dir, manifest.epoch);
        std::fs::write(&path, manifest.to_jsonl())?;
        paths.push(path);
    }
    Ok(paths)
}

/// Statistics for an existing cache. A missing or empty cache gives zeros.
pub fn run_report(cache_path: &Path) -> Result<RunReport, PipelineError> {
    let state = CacheState::load(cache_path)?;
    Ok(RunReport::from_cache(&state, &[]))
}
