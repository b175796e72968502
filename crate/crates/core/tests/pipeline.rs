mod common;

use std::collections::HashSet;
use std::sync::Arc;

use llmda::embed_gateway::EmbedGateway;
use llmda::faithfulness::Gateways;
use llmda::llm_gateway::LlmGateway;
use llmda::pipeline::{
    build_gateways, manifest_path, run_augment, run_report, run_sample, CacheState, PipelineError, RunOptions,
};
use llmda::sampler::{EpochManifest, TextSource};
use llmda::testkit::{MockChatBackend, MockEmbedBackend, MockProfile};

use common::toy_config;

struct Counted {
    gateways: Gateways,
    chat: Arc<MockChatBackend>,
    embed: Arc<MockEmbedBackend>,
}

fn counted(config: &llmda::pipeline::PipelineConfig) -> Counted {
    let chat = Arc::new(MockChatBackend::new(config.mock_profile));
    let embed = Arc::new(MockEmbedBackend::new());
    Counted {
        gateways: Gateways {
            llm: Arc::new(LlmGateway::new(chat.clone(), config.llm.clone(), config.template.clone())),
            embedder: Arc::new(EmbedGateway::new(embed.clone(), config.embedder.clone())),
        },
        chat,
        embed,
    }
}

#[test]
fn full_run_then_rerun_makes_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path(), 55, MockProfile::desk_run(11));
    let first = run_augment(&config, &build_gateways(&config), &RunOptions::default()).unwrap();
    // 55 images, 2 captions each, every tenth image held out for test.
    assert_eq!(first.processed, 100);
    assert_eq!(first.report.records, 100);
    assert_eq!(first.report.accepted + first.report.fallback, 100);
    assert_eq!(first.report.incomplete, 0);

    let c = counted(&config);
    let again = run_augment(&config, &c.gateways, &RunOptions::default()).unwrap();
    assert_eq!(again.processed, 0);
    assert_eq!(c.chat.call_count(), 0);
    assert_eq!(c.embed.call_count(), 0);
    assert_eq!(again.report, first.report);
}

#[test]
fn interrupted_run_resumes_remaining_records_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path(), 55, MockProfile::desk_run(12));

    let c1 = counted(&config);
    let partial = run_augment(&config, &c1.gateways, &RunOptions { limit: Some(50), resume: true }).unwrap();
    assert_eq!(partial.processed, 50);
    assert_eq!(partial.report.incomplete, 50);

    let c2 = counted(&config);
    let rest = run_augment(&config, &c2.gateways, &RunOptions::default()).unwrap();
    assert_eq!(rest.processed, 50);
    assert_eq!(rest.report.incomplete, 0);

    let first_half: HashSet<String> = c1.chat.call_log().into_iter().map(|(id, _, _)| id).collect();
    let second_half: HashSet<String> = c2.chat.call_log().into_iter().map(|(id, _, _)| id).collect();
    assert_eq!(first_half.len(), 50);
    assert_eq!(second_half.len(), 50);
    assert!(first_half.is_disjoint(&second_half));

    let fresh_dir = tempfile::tempdir().unwrap();
    let fresh = toy_config(fresh_dir.path(), 55, MockProfile::desk_run(12));
    let c3 = counted(&fresh);
    run_augment(&fresh, &c3.gateways, &RunOptions::default()).unwrap();
    assert_eq!(c1.chat.call_count() + c2.chat.call_count(), c3.chat.call_count());
    assert_eq!(
        CacheState::load(&config.cache_path).unwrap().canonical_lines(),
        CacheState::load(&fresh.cache_path).unwrap().canonical_lines()
    );
}

#[test]
fn torn_final_line_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path(), 20, MockProfile::desk_run(13));
    run_augment(&config, &build_gateways(&config), &RunOptions { limit: Some(10), resume: true }).unwrap();
    let mut raw = std::fs::read(&config.cache_path).unwrap();
    raw.extend_from_slice(b"{\"kind\":\"outcome\",\"text_id\":\"to");
    std::fs::write(&config.cache_path, &raw).unwrap();

    let done = run_augment(&config, &build_gateways(&config), &RunOptions::default()).unwrap();
    assert_eq!(done.processed, 26);
    assert_eq!(done.report.records, 36);
    let text = std::fs::read_to_string(&config.cache_path).unwrap();
    assert!(text.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn corrupt_line_names_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path(), 10, MockProfile::faithful(1));
    run_augment(&config, &build_gateways(&config), &RunOptions { limit: Some(3), resume: true }).unwrap();
    let text = std::fs::read_to_string(&config.cache_path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(2, "not json at all");
    std::fs::write(&config.cache_path, lines.join("\n") + "\n").unwrap();

    match run_augment(&config, &build_gateways(&config), &RunOptions::default()) {
        Err(e @ PipelineError::CorruptCache { line: 3, .. }) => assert_eq!(e.exit_code(), 4),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(run_report(&config.cache_path), Err(PipelineError::CorruptCache { line: 3, .. })));
}

#[test]
fn no_resume_starts_over() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path(), 10, MockProfile::faithful(2));
    run_augment(&config, &build_gateways(&config), &RunOptions::default()).unwrap();
    let again = run_augment(&config, &build_gateways(&config), &RunOptions { limit: None, resume: false }).unwrap();
    assert_eq!(again.processed, 18);
}

#[test]
fn runs_are_deterministic_and_worker_count_independent() {
    let profile = MockProfile::desk_run(21);
    let mut caches = Vec::new();
    let mut manifests = Vec::new();
    for workers in [1, 8, 8] {
        let dir = tempfile::tempdir().unwrap();
        let mut config = toy_config(dir.path(), 55, profile);
        config.worker_count = workers;
        run_augment(&config, &build_gateways(&config), &RunOptions::default()).unwrap();
        caches.push(CacheState::load(&config.cache_path).unwrap().canonical_lines());
        let paths = run_sample(&config).unwrap();
        manifests.push(paths.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(caches[0], caches[1]);
    assert_eq!(caches[1], caches[2]);
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(manifests[1], manifests[2]);
}

#[test]
fn llm_call_budget_holds() {
    let dir = tempfile::tempdir().unwrap();
    let mut profile = MockProfile::desk_run(32);
    profile.failure_rate = 0.2;
    profile.garbage_rate = 0.4;
    let mut config = toy_config(dir.path(), 55, profile);
    config.llm.transport_retry_limit = 5;
    let c = counted(&config);
    let run = run_augment(&config, &c.gateways, &RunOptions::default()).unwrap();
    let budget = run.report.records as u64 * config.max_attempts as u64 * (1 + config.llm.transport_retry_limit as u64);
    assert!(c.chat.call_count() <= budget);
    assert_eq!(c.gateways.llm.request_count(), c.chat.call_count());
}

#[test]
fn adversarial_mock_falls_back_for_its_garbage_share() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = toy_config(dir.path(), 1111, MockProfile::adversarial(41));
    config.worker_count = 8;
    let run = run_augment(&config, &build_gateways(&config), &RunOptions::default()).unwrap();
    assert_eq!(run.report.records, 2000);
    // Binomial(2000, 0.1): sd ~0.0067.
    assert!((run.report.fallback_rate - 0.10).abs() < 0.03, "{}", run.report.fallback_rate);
}

#[test]
fn gateway_failure_aborts_with_partial_cache() {
    let dir = tempfile::tempdir().unwrap();
    let mut profile = MockProfile::faithful(51);
    profile.failure_rate = 1.0;
    let mut config = toy_config(dir.path(), 10, profile);
    config.llm.transport_retry_limit = 1;
    match run_augment(&config, &build_gateways(&config), &RunOptions::default()) {
        Err(e @ PipelineError::Aborted { .. }) => {
            assert_eq!(e.exit_code(), 3);
            if let PipelineError::Aborted { report, .. } = e {
                assert_eq!(report.records, 18);
                assert_eq!(report.incomplete, 18);
            }
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(CacheState::load(&config.cache_path).is_ok());
}

#[test]
fn sample_writes_one_manifest_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = toy_config(dir.path(), 55, MockProfile::faithful(61));
    config.beta = 0.5;
    run_augment(&config, &build_gateways(&config), &RunOptions::default()).unwrap();
    let paths = run_sample(&config).unwrap();
    assert_eq!(paths.len(), 3);
    let manifests: Vec<EpochManifest> = paths
        .iter()
        .map(|p| EpochManifest::read_jsonl(std::io::BufReader::new(std::fs::File::open(p).unwrap())).unwrap())
        .collect();
    assert!(manifests.iter().all(|m| m.rows.len() == 100));
    let picks: Vec<Vec<TextSource>> = manifests.iter().map(|m| m.rows.iter().map(|r| r.source).collect()).collect();
    assert_ne!(picks[0], picks[1]);
    assert_ne!(picks[1], picks[2]);

    let before: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
    run_sample(&config).unwrap();
    let after: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(before, after);

    config.beta = 0.0;
    for p in run_sample(&config).unwrap() {
        let m = EpochManifest::read_jsonl(std::io::BufReader::new(std::fs::File::open(p).unwrap())).unwrap();
        assert!(m.rows.iter().all(|r| r.source == TextSource::Original));
    }
    assert_eq!(manifest_path(&config.output_dir, 2), paths[2]);
}

#[test]
fn sample_without_outcomes_lists_missing_ids() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path(), 10, MockProfile::faithful(71));
    run_augment(&config, &build_gateways(&config), &RunOptions { limit: Some(16), resume: true }).unwrap();
    match run_sample(&config) {
        Err(PipelineError::MissingOutcomes(ids)) => assert_eq!(ids.len(), 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn empty_cache_reports_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, b"").unwrap();
    let report = run_report(&path).unwrap();
    assert_eq!(report.records, 0);
    assert_eq!(report.histogram.total, 0);
    assert_eq!(report.fraction_first_attempt_at_or_above, 0.0);
    assert_eq!(run_report(&dir.path().join("absent.jsonl")).unwrap().records, 0);
}

#[test]
fn faithful_mock_first_attempts_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path(), 55, MockProfile::faithful(81));
    run_augment(&config, &build_gateways(&config), &RunOptions::default()).unwrap();
    let report = run_report(&config.cache_path).unwrap();
    assert_eq!(report.first_attempt_verdicts, 100);
    assert_eq!(report.fraction_first_attempt_at_or_above, 1.0);
    assert_eq!(report.accepted, 100);
    assert_eq!(report.attempt_distribution.get(&1), Some(&100));
}
