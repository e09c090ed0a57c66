//! Run reports: a JSON summary, a plain-text table beside it, and a JSONL
//! trace with one record per iteration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cok_core::eval::accuracy;
use cok_core::llm::prompt_fingerprint;
use cok_core::rethink::Resolution;
use cok_core::verify::{ReliabilityReport, VerificationMethod};
use cok_core::{Answer, ReasoningChain, TaskType, Triple};
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::kb_io::write_file;
use crate::run::QueryResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    EarlyExit,
    MaxScoreFallback,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub id: String,
    pub task_type: TaskType,
    pub gold: String,
    pub prediction: Option<String>,
    pub correct: bool,
    pub status: RowStatus,
    pub iterations: usize,
    /// Iteration whose chain was selected.
    pub selected_iteration: Option<usize>,
    /// Reliability of the selected chain.
    pub reliability: Option<f64>,
    pub injected: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub manifest: RunConfig,
    pub total: usize,
    pub correct: usize,
    pub failed: usize,
    /// `correct / total`, or 0 for an empty run.
    pub accuracy: f64,
    pub empty_run: bool,
    pub early_exits: usize,
    pub fallbacks: usize,
    /// Queries by number of iterations executed.
    pub iteration_histogram: BTreeMap<usize, usize>,
    /// Verification method of every generated triple in every iteration.
    pub method_counts: BTreeMap<VerificationMethod, usize>,
    pub rows: Vec<ReportRow>,
}

fn row(record: &DatasetRecord, result: &QueryResult) -> ReportRow {
    let iterations = result.iterations();
    let injected = iterations.iter().map(|it| it.injected.len()).sum();
    let mut r = ReportRow {
        id: record.id.clone(),
        task_type: record.task_type,
        gold: record.gold_answer.render(),
        prediction: None,
        correct: false,
        status: RowStatus::Failed,
        iterations: iterations.len(),
        selected_iteration: None,
        reliability: None,
        injected,
        error: None,
    };
    match result {
        QueryResult::Completed(o) => {
            let sel = o.selected();
            r.prediction = o.final_answer.as_ref().map(Answer::render);
            r.correct = o.final_answer.as_ref().is_some_and(|a| a.matches(&record.gold_answer));
            r.status = match o.resolution {
                Resolution::EarlyExit(_) => RowStatus::EarlyExit,
                Resolution::MaxScoreFallback => RowStatus::MaxScoreFallback,
            };
            r.selected_iteration = Some(sel.iteration);
            r.reliability = Some(sel.report.combined);
        }
        QueryResult::Failed(f) => r.error = Some(f.error.clone()),
    }
    r
}

/// Summarizes results, which must be in dataset order.
pub fn build_report(manifest: &RunConfig, dataset: &[DatasetRecord], results: &[QueryResult]) -> Result<EvalReport> {
    if dataset.len() != results.len() {
        return Err(Error::Invalid(format!(
            "{} results for {} dataset records",
            results.len(),
            dataset.len()
        )));
    }
    if let Some((d, r)) = dataset.iter().zip(results).find(|(d, r)| d.id != r.query_id()) {
        return Err(Error::Invalid(format!("result for `{}` where `{}` was expected", r.query_id(), d.id)));
    }
    let predictions: Vec<Option<Answer>> = results
        .iter()
        .map(|r| r.outcome().and_then(|o| o.final_answer.clone()))
        .collect();
    let gold: Vec<Answer> = dataset.iter().map(|d| d.gold_answer.clone()).collect();
    let acc = accuracy(&predictions, &gold).map_err(|e| Error::Invalid(e.to_string()))?;

    let mut iteration_histogram = BTreeMap::new();
    let mut method_counts: BTreeMap<VerificationMethod, usize> = [
        VerificationMethod::Exact,
        VerificationMethod::Implicit,
        VerificationMethod::Unverifiable,
    ]
    .into_iter()
    .map(|m| (m, 0))
    .collect();
    for r in results {
        *iteration_histogram.entry(r.iterations().len()).or_insert(0) += 1;
        for it in r.iterations() {
            for f in &it.report.factualities {
                *method_counts.entry(f.method).or_insert(0) += 1;
            }
        }
    }
    let rows: Vec<ReportRow> = dataset.iter().zip(results).map(|(d, r)| row(d, r)).collect();
    let count = |s: RowStatus| rows.iter().filter(|r| r.status == s).count();
    Ok(EvalReport {
        manifest: manifest.clone(),
        total: rows.len(),
        correct: rows.iter().filter(|r| r.correct).count(),
        failed: count(RowStatus::Failed),
        accuracy: acc,
        empty_run: rows.is_empty(),
        early_exits: count(RowStatus::EarlyExit),
        fallbacks: count(RowStatus::MaxScoreFallback),
        iteration_histogram,
        method_counts,
        rows,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:<8} {:<8} {:<4} {:>5} {:<18} {:>11}",
            "id", "gold", "pred", "ok", "iters", "status", "reliability"
        );
        for r in &self.rows {
            let status = match r.status {
                RowStatus::EarlyExit => "early_exit",
                RowStatus::MaxScoreFallback => "max_score_fallback",
                RowStatus::Failed => "failed",
            };
            let _ = writeln!(
                out,
                "{:<24} {:<8} {:<8} {:<4} {:>5} {:<18} {:>11}",
                r.id,
                r.gold,
                r.prediction.as_deref().unwrap_or("-"),
                if r.correct { "yes" } else { "no" },
                r.iterations,
                status,
                r.reliability.map_or("-".to_string(), |c| format!("{c:.4}")),
            );
        }
        let _ = writeln!(
            out,
            "\naccuracy {:.4} ({}/{}){}; early exits {}, fallbacks {}, failed {}",
            self.accuracy,
            self.correct,
            self.total,
            if self.empty_run { " [empty run]" } else { "" },
            self.early_exits,
            self.fallbacks,
            self.failed
        );
        let hist: Vec<String> = self.iteration_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        let _ = writeln!(out, "iterations {}", hist.join(" "));
        let methods: Vec<String> = self
            .method_counts
            .iter()
            .map(|(m, n)| {
                let name = match m {
                    VerificationMethod::Exact => "exact",
                    VerificationMethod::Implicit => "implicit",
                    VerificationMethod::Unverifiable => "unverifiable",
                };
                format!("{name}:{n}")
            })
            .collect();
        let _ = writeln!(out, "verification {}", methods.join(" "));
        out
    }
}

/// Path of the text table written beside a JSON report.
pub fn table_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("txt")
}

/// Writes the JSON report and its text table.
pub fn emit_report(report: &EvalReport, json_path: &Path) -> Result<()> {
    write_file(json_path, report.to_json())?;
    write_file(&table_path(json_path), report.to_table())
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    query_id: &'a str,
    iteration: usize,
    prompt_fingerprint: String,
    chain: &'a ReasoningChain,
    report: &'a ReliabilityReport,
    injected: &'a [Triple],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    votes: &'a [Option<Answer>],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// One JSON line per executed iteration; a failed query adds a final line
/// carrying its error.
pub fn render_trace(results: &[QueryResult]) -> String {
    let mut out = String::new();
    for r in results {
        for it in r.iterations() {
            let rec = TraceRecord {
                query_id: r.query_id(),
                iteration: it.iteration,
                prompt_fingerprint: format!("{:016x}", prompt_fingerprint(&it.prompt)),
                chain: &it.chain,
                report: &it.report,
                injected: &it.injected,
                votes: &it.votes,
                error: None,
            };
            out.push_str(&serde_json::to_string(&rec).expect("trace serializes"));
            out.push('\n');
        }
        if let QueryResult::Failed(f) = r {
            let line = serde_json::json!({
                "query_id": f.query_id,
                "iteration": f.partial.len() + 1,
                "error": f.error,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    out
}

pub fn write_trace(results: &[QueryResult], path: &Path) -> Result<()> {
    write_file(path, render_trace(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::FailedQuery;
    use cok_core::rethink::{IterationRecord, RethinkOutcome};
    use cok_core::verify::{FactualityResult, ScoreMode};

    fn record(id: &str, gold: Answer) -> DatasetRecord {
        DatasetRecord {
            id: id.into(),
            question: "q".into(),
            choices: None,
            task_type: gold.task_type(),
            gold_answer: gold,
        }
    }

    fn iteration(n: usize, combined: f64, methods: &[VerificationMethod]) -> IterationRecord {
        IterationRecord {
            iteration: n,
            prompt: format!("prompt {n}"),
            chain: ReasoningChain::default(),
            report: ReliabilityReport {
                factualities: methods
                    .iter()
                    .map(|&method| FactualityResult {
                        score: 1.0,
                        method,
                        triple: Triple::new("a", "b", "c").unwrap(),
                        links: None,
                    })
                    .collect(),
                faithfulness: 0.5,
                gamma: 0.5,
                mode: ScoreMode::Both,
                combined,
            },
            injected: Vec::new(),
            votes: Vec::new(),
        }
    }

    fn completed(id: &str, answer: Answer, iterations: Vec<IterationRecord>, resolution: Resolution) -> QueryResult {
        QueryResult::Completed(RethinkOutcome {
            query_id: id.into(),
            iterations,
            final_answer: Some(answer),
            resolution,
        })
    }

    fn sample() -> (Vec<DatasetRecord>, Vec<QueryResult>) {
        use VerificationMethod::*;
        let ds = vec![
            record("a", Answer::YesNo(true)),
            record("b", Answer::Number(3.0)),
            record("c", Answer::Choice('C')),
        ];
        let results = vec![
            completed("a", Answer::YesNo(true), vec![iteration(1, 0.9, &[Exact, Implicit])], Resolution::EarlyExit(1)),
            completed(
                "b",
                Answer::Number(4.0),
                vec![iteration(1, 0.2, &[Unverifiable]), iteration(2, 0.3, &[Exact])],
                Resolution::MaxScoreFallback,
            ),
            QueryResult::Failed(FailedQuery {
                query_id: "c".into(),
                error: "transport failed".into(),
                partial: vec![iteration(1, 0.1, &[Exact])],
            }),
        ];
        (ds, results)
    }

    #[test]
    fn counts_and_accuracy() {
        let (ds, results) = sample();
        let r = build_report(&RunConfig::default(), &ds, &results).unwrap();
        assert_eq!((r.total, r.correct, r.failed), (3, 1, 1));
        assert_eq!(r.accuracy, 1.0 / 3.0);
        assert!(!r.empty_run);
        assert_eq!((r.early_exits, r.fallbacks), (1, 1));
        assert_eq!(r.iteration_histogram.values().sum::<usize>(), 3);
        assert_eq!(r.iteration_histogram[&1], 2);
        assert_eq!(r.iteration_histogram[&2], 1);
        assert_eq!(r.method_counts[&VerificationMethod::Exact], 3);
        assert_eq!(r.method_counts.values().sum::<usize>(), 5);
        assert_eq!(r.rows[1].selected_iteration, Some(2));
        assert_eq!(r.rows[1].reliability, Some(0.3));
        assert_eq!(r.rows[2].error.as_deref(), Some("transport failed"));
        let table = r.to_table();
        assert!(table.contains("accuracy 0.3333 (1/3)"), "{table}");
        assert_eq!(table.lines().filter(|l| l.starts_with("b ")).count(), 1);
    }

    #[test]
    fn empty_run_is_flagged() {
        let r = build_report(&RunConfig::default(), &[], &[]).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert!(r.empty_run);
        assert!(r.to_json().contains("\"empty_run\": true"));
    }

    #[test]
    fn json_is_deterministic_and_complete() {
        let (ds, results) = sample();
        let a = build_report(&RunConfig::default(), &ds, &results).unwrap().to_json();
        let b = build_report(&RunConfig::default(), &ds, &results).unwrap().to_json();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["manifest"]["verify"]["gamma"], 0.5);
        assert_eq!(v["method_counts"]["exact"], 3);
        assert_eq!(v["iteration_histogram"]["2"], 1);
        assert_eq!(v["rows"][0]["status"], "early_exit");
    }

    #[test]
    fn mismatched_results_are_rejected() {
        let (ds, results) = sample();
        assert!(build_report(&RunConfig::default(), &ds[..2], &results).is_err());
        let mut swapped = results.clone();
        swapped.swap(0, 1);
        assert!(build_report(&RunConfig::default(), &ds, &swapped).is_err());
    }

    #[test]
    fn trace_has_a_line_per_iteration() {
        let (_, results) = sample();
        let trace = render_trace(&results);
        let lines: Vec<serde_json::Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2]["iteration"], 2);
        assert_eq!(lines[4]["error"], "transport failed");
        assert_eq!(lines[0]["prompt_fingerprint"].as_str().unwrap().len(), 16);
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, results) = sample();
        let r = build_report(&RunConfig::default(), &ds, &results).unwrap();
        let p = dir.path().join("out/report.json");
        emit_report(&r, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), r.to_json());
        assert!(std::fs::read_to_string(table_path(&p)).unwrap().contains("accuracy"));
    }
}
