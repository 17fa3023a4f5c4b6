//! End-to-end pipeline runs against the bundled corpus: record once with
//! the scripted model, then replay offline.

use std::collections::BTreeMap;
use std::path::Path;

use tracetree_core::gateway::{ChatRequest, ChatResponse, Transport, TransportFault};
use tracetree_core::harness::pipeline::{
    run_pipeline, LevelSpec, PipelineConfig, PipelineError, PipelineOutcome,
};
use tracetree_core::harness::synthetic::SyntheticModel;
use tracetree_core::harness::pipeline;

/// Transport that must never be reached; replay goes through fixtures.
struct NoNetwork;

impl Transport for NoNetwork {
    fn post_chat(
        &self,
        _base_url: &str,
        _request: &ChatRequest,
        _bearer: Option<&str>,
    ) -> Result<ChatResponse, TransportFault> {
        panic!("network transport used during replay");
    }
}

fn demo_config(out_dir: &Path, fixture_dir: &Path, mode: tracetree_core::gateway::Mode) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.seed = 4242;
    config.out_dir = out_dir.to_path_buf();
    config.gateway.mode = mode;
    config.gateway.fixture_dir = fixture_dir.to_path_buf();
    config.compose.levels = vec![
        LevelSpec { level: 1, limit: 20 },
        LevelSpec { level: 2, limit: 10 },
        LevelSpec { level: 3, limit: 6 },
    ];
    config.ablation.trials = 3;
    config.forest.n_estimators = 15;
    config
}

fn scripted_model(config: &PipelineConfig) -> SyntheticModel {
    SyntheticModel::for_pipeline(config, 7).expect("python available for oracle resolution")
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.path().is_file() {
            out.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
    }
    out
}

#[test]
fn record_then_replay_twice_is_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let fixtures = root.path().join("fixtures");

    // Record pass: scripted model answers, fixtures land on disk.
    let record_config = demo_config(&root.path().join("record"), &fixtures, tracetree_core::gateway::Mode::Record);
    let model = scripted_model(&record_config);
    let recorded: PipelineOutcome = run_pipeline(&record_config, model).expect("record run");
    assert!(recorded.report.problems >= 30);
    assert!(recorded.report.traces >= 30);

    // Two replay passes with a transport that panics on use.
    let replay_a = demo_config(&root.path().join("replay_a"), &fixtures, tracetree_core::gateway::Mode::Replay);
    run_pipeline(&replay_a, NoNetwork).expect("replay a");
    let replay_b = demo_config(&root.path().join("replay_b"), &fixtures, tracetree_core::gateway::Mode::Replay);
    run_pipeline(&replay_b, NoNetwork).expect("replay b");

    let a = tree_bytes(&root.path().join("replay_a"));
    let b = tree_bytes(&root.path().join("replay_b"));
    let names_a: Vec<&String> = a.keys().collect();
    assert!(a.contains_key("problems.jsonl"), "artifacts: {names_a:?}");
    assert!(a.contains_key("metrics.json"));
    assert!(a.contains_key("intervention.json"));
    // manifest.json embeds the out_dir, which differs by design; all data
    // artifacts must match byte for byte.
    for (name, bytes) in &a {
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(
            Some(bytes),
            b.get(name),
            "artifact {name} differs between replays"
        );
    }
}

#[test]
fn replay_with_missing_fixture_aborts_naming_the_key() {
    let root = tempfile::tempdir().unwrap();
    let empty_fixtures = root.path().join("no_fixtures");
    std::fs::create_dir_all(&empty_fixtures).unwrap();
    let config = demo_config(&root.path().join("out"), &empty_fixtures, tracetree_core::gateway::Mode::Replay);
    let err = run_pipeline(&config, NoNetwork).unwrap_err();
    match err {
        PipelineError::FixtureMiss { key } => assert!(!key.is_empty()),
        other => panic!("unexpected error: {other}"),
    }
}

#[test]
fn config_round_trips_through_toml() {
    let config = PipelineConfig::default();
    let body = config.to_toml();
    let back = PipelineConfig::from_toml(&body).unwrap();
    assert_eq!(config, back);
    // A minimal document relies on defaults everywhere.
    let minimal = pipeline::PipelineConfig::from_toml("seed = 7\n").unwrap();
    assert_eq!(minimal.seed, 7);
    assert_eq!(minimal.forest.n_estimators, 50);
}
