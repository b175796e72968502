#![allow(dead_code)]

use std::path::Path;

use llmda::pipeline::PipelineConfig;
use llmda::testkit::{toy_corpus_json, MockProfile};

/// Writes a toy corpus with `images` images (two captions each) and returns
/// a mock-backed config rooted in `dir`.
pub fn toy_config(dir: &Path, images: usize, profile: MockProfile) -> PipelineConfig {
    let corpus = dir.join("annotations.json");
    std::fs::write(&corpus, toy_corpus_json(images, profile.seed)).unwrap();
    let mut config = PipelineConfig {
        corpus_path: corpus,
        cache_path: dir.join("cache.jsonl"),
        output_dir: dir.join("manifests"),
        mock: true,
        mock_profile: profile,
        seed: profile.seed,
        epochs: 3,
        ..PipelineConfig::default()
    };
    for g in [&mut config.llm, &mut config.embedder] {
        g.requests_per_second_cap = 1e6;
        g.retry_backoff_ms = 1;
    }
    config
}
