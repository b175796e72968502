use std::path::Path;
use std::process::{Command, Output};

use llmda::testkit::toy_corpus_json;

fn llmda(args: &[&str]) -> Output {
    llmda_with_llm_url(args, None)
}

fn llmda_with_llm_url(args: &[&str], url: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_llmda"));
    cmd.args(args).env_remove("LLMDA_LLM_URL").env_remove("LLMDA_EMBED_URL");
    if let Some(url) = url {
        cmd.env("LLMDA_LLM_URL", url);
    }
    cmd.output().expect("run llmda")
}

fn write_config(dir: &Path) -> String {
    std::fs::write(dir.join("annotations.json"), toy_corpus_json(20, 4)).unwrap();
    let path = dir.join("llmda.toml");
    std::fs::write(
        &path,
        r#"corpus_path = "annotations.json"
cache_path = "cache.jsonl"
output_dir = "manifests"
epochs = 2
worker_count = 2

[llm]
requests_per_second_cap = 100000.0
retry_backoff_ms = 1

[embedder]
model_id = "mock-embed"
requests_per_second_cap = 100000.0

[mock_profile]
seed = 4
garbage_rate = 0.1
failure_rate = 0.05
"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn augment_sample_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());

    let out = llmda(&["augment", "--config", &config, "--mock", "--limit", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["incomplete"], 26);

    let out = llmda(&["augment", "--config", &config, "--mock", "--resume"]);
    assert!(out.status.success());
    let report = json(&out);
    assert_eq!(report["records"], 36);
    assert_eq!(report["incomplete"], 0);

    let out = llmda(&["report", "--config", &config]);
    assert!(out.status.success());
    assert_eq!(json(&out), report);

    let out = llmda(&["sample", "--config", &config, "--beta", "0.5"]);
    assert!(out.status.success());
    let paths = String::from_utf8(out.stdout).unwrap();
    assert_eq!(paths.lines().count(), 2);
    assert!(dir.path().join("manifests/epoch_001.jsonl").exists());

    let out = llmda(&["augment", "--config", &config, "--mock", "--no-resume", "--limit", "1"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["incomplete"], 35);
}

#[test]
fn validate_reports_split_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = llmda(&["validate", "--config", &config]);
    assert!(out.status.success());
    let report = json(&out);
    assert_eq!(report["record_count"], 40);
    assert_eq!(report["split_counts"]["test"], 4);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());

    assert_eq!(llmda(&["augment", "--config", &config, "--mock", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(llmda(&["report", "--config", "/nonexistent/llmda.toml"]).status.code(), Some(2));

    std::fs::write(dir.path().join("annotations.json"), b"[{\"file_path\": 3}]").unwrap();
    assert_eq!(llmda(&["validate", "--config", &config]).status.code(), Some(4));

    std::fs::write(dir.path().join("annotations.json"), toy_corpus_json(4, 1)).unwrap();
    assert_eq!(llmda(&["sample", "--config", &config]).status.code(), Some(4));

    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let unreachable = llmda_with_llm_url(
        &[
            "augment",
            "--corpus",
            dir.path().join("annotations.json").to_str().unwrap(),
            "--cache",
            dir.path().join("other.jsonl").to_str().unwrap(),
        ],
        Some(&format!("http://{closed}")),
    );
    assert_eq!(unreachable.status.code(), Some(3), "{}", String::from_utf8_lossy(&unreachable.stderr));
}

#[test]
fn eval_scores_feature_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images.jsonl");
    let texts = dir.path().join("texts.jsonl");
    std::fs::write(
        &images,
        "{\"id\":\"i0\",\"identity\":\"a\",\"vector\":[1,0,0]}\n{\"id\":\"i1\",\"identity\":\"b\",\"vector\":[0,1,0]}\n{\"id\":\"i2\",\"identity\":\"c\",\"vector\":[0,0,1]}\n",
    )
    .unwrap();
    std::fs::write(
        &texts,
        "{\"id\":\"t0\",\"identity\":\"a\",\"vector\":[0.9,0.1,0]}\n{\"id\":\"t1\",\"identity\":\"b\",\"vector\":[0,1,0.2]}\n{\"id\":\"t2\",\"identity\":\"c\",\"vector\":[0.1,0,1]}\n",
    )
    .unwrap();
    let out = llmda(&[
        "eval",
        "--images",
        images.to_str().unwrap(),
        "--texts",
        texts.to_str().unwrap(),
        "--k",
        "1,2",
        "--tau",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["n"], 3);
    assert_eq!(v["rank"]["1"], 100.0);
    assert_eq!(v["map"], 100.0);
    assert!(v["loss"].as_f64().unwrap() > 0.0);

    assert_eq!(
        llmda(&["eval", "--images", images.to_str().unwrap(), "--texts", "/nonexistent"]).status.code(),
        Some(4)
    );
}
