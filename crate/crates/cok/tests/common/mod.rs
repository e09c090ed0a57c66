//! Fixture helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cok::config::{BackendSpec, RunConfig};
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Writes the case-study completions as a mock script holding, per query,
/// the responses for iterations `1..=max_iteration` in dataset order.
pub fn case_study_script(dir: &Path, max_iteration: u64) -> PathBuf {
    let text = std::fs::read_to_string(fixtures().join("case_study/responses.jsonl")).unwrap();
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        if v["iteration"].as_u64().unwrap() <= max_iteration {
            out.push_str(&serde_json::json!({ "texts": v["texts"] }).to_string());
            out.push('\n');
        }
    }
    let path = dir.join(format!("script_{max_iteration}.jsonl"));
    std::fs::write(&path, out).unwrap();
    path
}

/// Between the letter chain's first (0.757) and second (0.808) scores; the
/// commonsense chain stays below it and falls back to its better second try.
pub const CASE_STUDY_THRESHOLD: f64 = 0.8;

/// Case-study manifest over a mock script, running `max_iterations` rounds.
pub fn case_study_config(dir: &Path, max_iterations: usize) -> RunConfig {
    let f = fixtures();
    let mut cfg = RunConfig {
        dataset: Some(f.join("case_study/dataset.jsonl")),
        exemplars: vec![f.join("exemplars/letters.jsonl"), f.join("exemplars/csqa.jsonl")],
        kb: vec![f.join("kb/letters.tsv"), f.join("kb/commonsense.tsv")],
        backend: Some(BackendSpec::Script {
            path: case_study_script(dir, max_iterations as u64),
        }),
        ..RunConfig::default()
    };
    cfg.rethink.max_iterations = max_iterations;
    cfg.rethink.threshold = CASE_STUDY_THRESHOLD;
    cfg
}

/// Replays a scripted run of `cfg` through a recorder, producing a replay
/// log that answers exactly the requests the run made.
pub fn record_replay_log(cfg: &RunConfig, log: &Path) {
    use cok::llm::{RecordingBackend, ScriptedBackend};
    use cok_core::llm::{GenerationRequest, LlmBackend};

    let Some(BackendSpec::Script { path }) = &cfg.backend else {
        panic!("expected a scripted manifest");
    };
    let run = cok::run::execute(cfg).unwrap();
    let recorder = RecordingBackend::create(ScriptedBackend::from_script(path).unwrap(), log).unwrap();
    for r in &run.results {
        for it in r.iterations() {
            let request = GenerationRequest {
                model: cfg.rethink.model.clone(),
                prompt: it.prompt.clone(),
                params: cfg.rethink.decoding_params(),
            };
            recorder.complete(&request).unwrap();
        }
    }
}

pub fn write_manifest(cfg: &RunConfig, path: &Path) {
    std::fs::write(path, toml::to_string(cfg).unwrap()).unwrap();
}
