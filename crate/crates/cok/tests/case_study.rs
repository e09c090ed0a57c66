//! The letter-concatenation and ferret scenarios under scripted completions:
//! one wrong first attempt each, corrected after knowledge injection.

mod common;

use cok::report::RowStatus;
use cok::run::execute;
use cok_core::parse::Answer;
use cok_core::Triple;

#[test]
fn rethinking_disabled_gets_both_wrong() {
    let dir = tempfile::tempdir().unwrap();
    let run = execute(&common::case_study_config(dir.path(), 1)).unwrap();
    assert_eq!(run.report.correct, 0);
    assert_eq!(run.report.total, 2);
    let preds: Vec<_> = run.report.rows.iter().map(|r| r.prediction.clone().unwrap()).collect();
    assert_eq!(preds, ["eeik", "(D)"]);
}

#[test]
fn rethinking_fixes_both() {
    let dir = tempfile::tempdir().unwrap();
    let run = execute(&common::case_study_config(dir.path(), 2)).unwrap();
    assert_eq!(run.report.correct, 2);
    assert_eq!(run.report.accuracy, 1.0);

    let letters = run.results[0].outcome().unwrap();
    let first = &letters.iterations[0];
    assert_eq!(first.chain.answer, Some(Answer::Text("eeik".into())));
    assert!(first.injected.contains(&Triple::new("Vishal", "last latter", "l").unwrap()));
    assert!(letters.iterations[1].prompt.contains("(Vishal, last latter, l)"));
    assert_eq!(letters.final_answer, Some(Answer::Text("eelk".into())));
    assert_eq!(run.report.rows[0].status, RowStatus::EarlyExit);
    assert_eq!(run.report.rows[0].selected_iteration, Some(2));

    let ferret = run.results[1].outcome().unwrap();
    assert!(ferret.iterations[0].injected.contains(&Triple::new("ferret", "popular", "Great Britain").unwrap()));
    assert_eq!(ferret.final_answer, Some(Answer::Choice('C')));
    assert_eq!(run.report.rows[1].status, RowStatus::MaxScoreFallback);
    assert_eq!(run.report.rows[1].selected_iteration, Some(2));
}

#[test]
fn scores_sit_on_either_side_of_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::case_study_config(dir.path(), 2);
    cfg.rethink.threshold = 1.0;
    let run = execute(&cfg).unwrap();
    let scores: Vec<Vec<f64>> = run
        .results
        .iter()
        .map(|r| r.iterations().iter().map(|it| it.report.combined).collect())
        .collect();
    let theta = common::CASE_STUDY_THRESHOLD;
    assert!(scores[0][0] < theta && scores[0][1] >= theta, "{scores:?}");
    assert!(scores[1][0] < scores[1][1] && scores[1][1] < theta, "{scores:?}");
}
