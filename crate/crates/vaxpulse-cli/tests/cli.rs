//! Exit-code discipline and stdout/stderr contracts of the CLI:
//! 0 success, 1 runtime failure, 2 usage/config error.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vaxpulse")
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn vaxpulse")
}

/// Sandbox with the bundled fixtures and a small config.
fn sandbox() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for name in ["posts-1k.jsonl", "sentiment-train.jsonl", "mock-responses.json", "trends.csv"] {
        std::fs::copy(fixtures_dir().join(name), dir.path().join(name)).unwrap();
    }
    std::fs::write(
        dir.path().join("config.json"),
        r#"{
            "store_root": "store",
            "relevance": {"tau_r": 0.75, "use_provider": true},
            "sentiment": {"model_path": "models/sentiment.v1.json", "tau_s": 0.70, "use_provider": true},
            "topics": {"min_topic_size": 10, "concern_grouping": true, "use_provider": true},
            "providers": [{"id": "mock", "mock_file": "mock-responses.json", "rate_limit": 600}],
            "report": {"granularity": "monthly", "formats": ["markdown", "csv"], "out_dir": "out"}
        }"#,
    )
    .unwrap();
    dir
}

fn config_arg(dir: &Path) -> String {
    dir.join("config.json").display().to_string()
}

#[test]
fn unknown_subcommand_and_flag_exit_2_with_usage() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let out = run(&["normalize", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn missing_config_file_exits_2() {
    let out = run(&["normalize", "--config", "/no/such/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).expect("structured error");
    assert_eq!(parsed["error"]["code"], 2);
}

#[test]
fn config_validation_failure_exits_2_naming_field() {
    let dir = sandbox();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{
            "store_root": "store",
            "relevance": {"tau_r": 7.5, "use_provider": false},
            "sentiment": {"model_path": "m.json", "use_provider": false},
            "topics": {"use_provider": false}
        }"#,
    )
    .unwrap();
    let out = run(&["normalize", "--config", &dir.path().join("bad.json").display().to_string()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("relevance.tau_r"), "{stderr}");
}

#[test]
fn ingest_prints_stats_and_dedups_across_invocations() {
    let dir = sandbox();
    let config = config_arg(dir.path());
    let out = run(&["ingest", "--config", &config, "--source", "x", "--fixture",
        &dir.path().join("posts-1k.jsonl").display().to_string()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["fetched"], 1000);
    assert_eq!(stats["stored"], 1000);

    let out = run(&["ingest", "--config", &config, "--source", "x", "--fixture",
        &dir.path().join("posts-1k.jsonl").display().to_string()]);
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["stored"], 0);
    assert_eq!(stats["duplicates"], 1000);
}

#[test]
fn ingest_requires_a_source_argument() {
    let dir = sandbox();
    let config = config_arg(dir.path());
    let out = run(&["ingest", "--config", &config, "--source", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn normalize_counts_and_classify_without_model_exits_2() {
    let dir = sandbox();
    let config = config_arg(dir.path());
    run(&["ingest", "--config", &config, "--source", "x", "--fixture",
        &dir.path().join("posts-1k.jsonl").display().to_string()]);
    let out = run(&["normalize", "--config", &config]);
    assert_eq!(out.status.code(), Some(0));
    let counts: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(counts["processed"], 1000);
    assert_eq!(
        counts["kept"].as_u64().unwrap() + counts["dropped"].as_u64().unwrap(),
        1000
    );

    // Sentiment model not trained yet: config error naming the field.
    let out = run(&["classify", "--config", &config, "--stage", "sentiment"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sentiment.model_path"), "{stderr}");
}

#[test]
fn train_then_classify_reports_provider_and_degraded_counts() {
    let dir = sandbox();
    let config = config_arg(dir.path());
    run(&["ingest", "--config", &config, "--source", "x", "--fixture",
        &dir.path().join("posts-1k.jsonl").display().to_string()]);
    run(&["normalize", "--config", &config]);
    let out = run(&["train-sentiment", "--config", &config, "--labeled",
        &dir.path().join("sentiment-train.jsonl").display().to_string()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("models/sentiment.v1.json").exists());

    let out = run(&["classify", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stages: Vec<&str> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, vec!["relevance", "sentiment", "concern"]);
    for report in reports.as_array().unwrap() {
        assert!(report["provider_calls"].is_number());
        assert!(report["degraded"].is_number());
    }
}

#[test]
fn report_with_unwritable_out_dir_exits_1_naming_path() {
    let dir = sandbox();
    // Point out_dir through a regular file so directory creation fails.
    std::fs::write(dir.path().join("blocker"), b"file").unwrap();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{
            "store_root": "store",
            "relevance": {"use_provider": false},
            "sentiment": {"model_path": "models/sentiment.v1.json", "use_provider": false},
            "topics": {"use_provider": false},
            "report": {"granularity": "monthly", "formats": ["markdown"], "out_dir": "blocker/out"}
        }"#,
    )
    .unwrap();
    let config = config_arg(dir.path());
    run(&["ingest", "--config", &config, "--source", "x", "--fixture",
        &dir.path().join("posts-1k.jsonl").display().to_string()]);
    run(&["normalize", "--config", &config]);
    let out = run(&["report", "--config", &config]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("blocker"), "{stderr}");
}

#[test]
fn pipeline_manifest_stage_counts_chain_consistently() {
    let dir = sandbox();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{
            "store_root": "store",
            "ingest": {"fixtures": ["posts-1k.jsonl"]},
            "relevance": {"tau_r": 0.75, "use_provider": true},
            "sentiment": {"model_path": "models/sentiment.v1.json", "tau_s": 0.70, "use_provider": true},
            "topics": {"min_topic_size": 10, "concern_grouping": true, "use_provider": true},
            "providers": [{"id": "mock", "mock_file": "mock-responses.json", "rate_limit": 600}],
            "report": {"granularity": "monthly", "formats": ["markdown", "csv"], "out_dir": "out"}
        }"#,
    )
    .unwrap();
    let config = config_arg(dir.path());
    run(&["train-sentiment", "--config", &config, "--labeled",
        &dir.path().join("sentiment-train.jsonl").display().to_string()]);
    let out = run(&["pipeline", "run", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let stages = manifest["stages"].as_array().unwrap();
    let by_name = |name: &str| {
        stages
            .iter()
            .find(|s| s["stage"] == name)
            .unwrap_or_else(|| panic!("missing stage {name}"))
    };
    // Each stage consumes exactly what the previous stage handed on.
    for (prev, next) in [
        ("ingest", "normalize"),
        ("normalize", "relevance"),
        ("relevance", "sentiment"),
        ("sentiment", "concern"),
        ("concern", "topics"),
        ("topics", "report"),
    ] {
        assert_eq!(
            by_name(prev)["output"],
            by_name(next)["input"],
            "{prev} output != {next} input"
        );
    }
    assert_eq!(by_name("ingest")["input"], 1000);
}

#[test]
fn topics_fit_prints_tables_and_report_reuses_models() {
    let dir = sandbox();
    let config = config_arg(dir.path());
    run(&["ingest", "--config", &config, "--source", "x", "--fixture",
        &dir.path().join("posts-1k.jsonl").display().to_string()]);
    run(&["normalize", "--config", &config]);
    run(&["train-sentiment", "--config", &config, "--labeled",
        &dir.path().join("sentiment-train.jsonl").display().to_string()]);
    run(&["classify", "--config", &config]);

    let out = run(&["topics", "fit", "--config", &config, "--sentiment-filter", "negative,neutral"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("group:"), "{stdout}");
    assert!(stdout.contains("comments"), "{stdout}");
    assert!(dir.path().join("store/models/topics-current.json").exists());

    // Restricting to one concern fits exactly that group.
    let out = run(&["topics", "fit", "--config", &config, "--concern", "side_effects"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("group: side_effects"), "{stdout}");
    assert!(!stdout.contains("group: misinformation"), "{stdout}");

    let out = run(&["report", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let paths: Vec<&str> = manifest
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["path"].as_str().unwrap())
        .collect();
    assert!(paths.contains(&"report.md"));
    // Topic tables from the fitted models appear in the report output.
    assert!(paths.iter().any(|p| p.starts_with("topics-")), "{paths:?}");
}

#[test]
fn topics_fit_before_classification_is_a_runtime_failure() {
    let dir = sandbox();
    let config = config_arg(dir.path());
    run(&["ingest", "--config", &config, "--source", "x", "--fixture",
        &dir.path().join("posts-1k.jsonl").display().to_string()]);
    run(&["normalize", "--config", &config]);
    // No relevance labels yet: the slice is empty.
    let out = run(&["topics", "fit", "--config", &config]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(parsed["error"]["stage"], "topics");
}

#[test]
fn trends_ingest_maps_rows_to_posts() {
    let dir = sandbox();
    let config = config_arg(dir.path());
    let out = run(&["ingest", "--config", &config, "--source", "google_trends", "--trends",
        &dir.path().join("trends.csv").display().to_string()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["fetched"], 24);
    assert_eq!(stats["stored"], 24);
}
