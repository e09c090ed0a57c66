//! Defaults a fresh manifest runs with.

use cok::config::RunConfig;
use cok::exemplars::Task;
use cok_core::rethink::SelfConsistency;
use std::path::Path;

#[test]
fn empty_manifest_uses_documented_defaults() {
    let cfg = RunConfig::parse("", Path::new("run.toml")).unwrap();
    assert_eq!(cfg.verify.gamma, 0.5);
    assert_eq!(cfg.verify.link_threshold, 0.85);
    assert_eq!(cfg.rethink.decoding.temperature, 0.0);
    assert_eq!(cfg.rethink.decoding.max_tokens, 512);
    assert_eq!(cfg.rethink.decoding.n_samples, 1);
    assert_eq!(cfg.rethink.self_consistency, None);
    assert_eq!(cfg.rethink.corrections_per_triple, 2);
    assert_eq!(cfg.rethink.max_injected, 6);
}

#[test]
fn self_consistency_defaults() {
    let cfg = RunConfig::parse("[rethink.self_consistency]\n", Path::new("run.toml")).unwrap();
    let sc = cfg.rethink.self_consistency.unwrap();
    assert_eq!(sc, SelfConsistency::default());
    assert_eq!(sc.samples, 10);
    assert_eq!(sc.temperature, 0.7);
    let params = cfg.rethink.decoding_params();
    assert_eq!((params.n_samples, params.temperature, params.max_tokens), (10, 0.7, 512));
}

#[test]
fn shipped_exemplar_counts() {
    let expected = [
        ("letters", 4),
        ("coin", 8),
        ("sports", 6),
        ("arc_c", 8),
        ("csqa", 8),
        ("aqua", 8),
        ("gsm8k", 8),
        ("multiarith", 8),
        ("svamp", 8),
        ("boolq", 6),
        ("strategyqa", 6),
        ("openbookqa", 8),
    ];
    assert_eq!(Task::ALL.len(), expected.len());
    for (name, n) in expected {
        let task: Task = name.parse().unwrap();
        assert_eq!(task.builtin_exemplars().len(), n, "{name}");
        assert_eq!(task.exemplar_count(), n, "{name}");
        assert!(task.builtin_exemplars().iter().all(|e| e.task_type == task.task_type()));
    }
}
