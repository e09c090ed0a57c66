//! Dataset-level execution with a pool of worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cok_core::llm::LlmBackend;
use cok_core::prompt::{perturb_exemplars, Exemplar, PromptError, Query};
use cok_core::verify::Verifier;
use cok_core::KnowledgeBase;
use cok_core::rethink::{ChainScorer, IterationRecord, RethinkConfig, RethinkError, RethinkOutcome, Rethinker};

use crate::config::RunConfig;
use crate::dataset::{load_dataset, DatasetRecord};
use crate::encoders::open_encoder;
use crate::error::{Error, Result};
use crate::exemplars::{load_exemplars, ExemplarSet, Task};
use crate::kb_io::{load_kb_any, load_model};
use crate::llm::open_backend;
use crate::report::{build_report, EvalReport};

/// A query that could not be completed, with whatever iterations finished.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedQuery {
    pub query_id: String,
    pub error: String,
    pub partial: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    Completed(RethinkOutcome),
    Failed(FailedQuery),
}

impl QueryResult {
    pub fn query_id(&self) -> &str {
        match self {
            QueryResult::Completed(o) => &o.query_id,
            QueryResult::Failed(f) => &f.query_id,
        }
    }

    pub fn outcome(&self) -> Option<&RethinkOutcome> {
        match self {
            QueryResult::Completed(o) => Some(o),
            QueryResult::Failed(_) => None,
        }
    }

    /// Iterations executed, including those of a failed query.
    pub fn iterations(&self) -> &[IterationRecord] {
        match self {
            QueryResult::Completed(o) => &o.iterations,
            QueryResult::Failed(f) => &f.partial,
        }
    }
}

fn run_one<S, B>(query: &Query, exemplars: &ExemplarSet, scorer: &S, llm: &B, config: &RethinkConfig) -> QueryResult
where
    S: ChainScorer + ?Sized,
    B: LlmBackend + ?Sized,
{
    let failed = |error: String, partial| {
        log::warn!("query {} failed: {error}", query.id);
        QueryResult::Failed(FailedQuery {
            query_id: query.id.clone(),
            error,
            partial,
        })
    };
    let Some(ex) = exemplars.for_task(query.task_type) else {
        return failed(format!("no exemplars for task type {}", query.task_type), Vec::new());
    };
    let result = Rethinker::new(ex, scorer, llm, config.clone()).and_then(|r| r.run_query(query));
    match result {
        Ok(o) => QueryResult::Completed(o),
        Err(RethinkError::Backend { source, partial }) => failed(source.to_string(), partial),
        Err(e) => failed(e.to_string(), Vec::new()),
    }
}

/// Runs every query and returns results in input order. Configuration
/// errors abort the run; any per-query failure becomes a failed entry.
pub fn run_dataset<S, B>(
    queries: &[Query],
    exemplars: &ExemplarSet,
    scorer: &S,
    llm: &B,
    config: &RethinkConfig,
    parallelism: usize,
) -> Result<Vec<QueryResult>, RethinkError>
where
    S: ChainScorer + Sync + ?Sized,
    B: LlmBackend + ?Sized,
{
    config.validate()?;
    if parallelism == 0 {
        return Err(RethinkError::Config("parallelism must be at least 1".into()));
    }
    if exemplars.is_empty() && !queries.is_empty() {
        return Err(PromptError::NoExemplars.into());
    }
    let workers = parallelism.min(queries.len());
    if workers <= 1 {
        return Ok(queries
            .iter()
            .map(|q| run_one(q, exemplars, scorer, llm, config))
            .collect());
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<QueryResult>>> = Mutex::new(vec![None; queries.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(q) = queries.get(i) else { break };
                let r = run_one(q, exemplars, scorer, llm, config);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    Ok(slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every query ran"))
        .collect())
}

/// Exemplars a manifest names: its files, else a shipped set, optionally
/// perturbed with random KB triples.
pub fn manifest_exemplars(cfg: &RunConfig, kb: &KnowledgeBase) -> Result<Vec<Exemplar>> {
    let mut ex = Vec::new();
    for p in &cfg.exemplars {
        ex.extend(load_exemplars(p)?);
    }
    if ex.is_empty() {
        let task: Task = cfg
            .task
            .as_deref()
            .ok_or_else(|| Error::Invalid("no exemplars: set `exemplars` or `task`".into()))?
            .parse()
            .map_err(Error::Invalid)?;
        ex = task.builtin_exemplars();
    }
    if let Some(beta) = cfg.perturb_beta {
        ex = perturb_exemplars(&ex, beta, kb, cfg.seed)?.exemplars;
    }
    Ok(ex)
}

pub struct RunArtifacts {
    pub dataset: Vec<DatasetRecord>,
    pub results: Vec<QueryResult>,
    pub report: EvalReport,
}

/// Loads everything a manifest names, runs the dataset and summarizes it.
pub fn execute(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let dataset_path = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| Error::Invalid("no dataset given".into()))?;
    let backend_spec = cfg
        .backend
        .as_ref()
        .ok_or_else(|| Error::Invalid("no backend given".into()))?;
    let dataset = load_dataset(dataset_path)?;
    let kb = load_kb_any(&cfg.kb, cfg.aliases.as_deref())?;
    let model = cfg.checkpoint.as_deref().map(load_model).transpose()?;
    let encoder = open_encoder(&cfg.encoder)?;
    let exemplars = ExemplarSet::new(manifest_exemplars(cfg, &kb)?);
    let llm = open_backend(backend_spec)?;
    let verifier = Verifier::new(&kb, model.as_ref(), &encoder, cfg.verify.clone())?;
    let queries: Vec<Query> = dataset.iter().map(DatasetRecord::query).collect();
    log::info!("running {} queries with {} exemplars", queries.len(), exemplars.len());
    let results = run_dataset(&queries, &exemplars, &verifier, &llm, &cfg.rethink, cfg.parallelism)?;
    let report = build_report(cfg, &dataset, &results)?;
    Ok(RunArtifacts {
        dataset,
        results,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exemplars::Task;
    use crate::llm::ScriptedBackend;
    use cok_core::parse::Answer;
    use cok_core::verify::{ReliabilityReport, ScoreMode};
    use cok_core::{ReasoningChain, TaskType, Triple};

    /// Scores a chain by its answer: "(A)" is reliable, anything else not.
    struct ByAnswer;

    impl ChainScorer for ByAnswer {
        fn score(&self, _: &str, chain: &ReasoningChain) -> ReliabilityReport {
            let combined = if chain.answer == Some(Answer::Choice('A')) { 1.0 } else { 0.0 };
            ReliabilityReport {
                factualities: Vec::new(),
                faithfulness: combined,
                gamma: 0.5,
                mode: ScoreMode::Both,
                combined,
            }
        }
        fn corrections(&self, _: &Triple, _: usize) -> Vec<Triple> {
            Vec::new()
        }
    }

    fn queries(n: usize) -> Vec<Query> {
        (0..n)
            .map(|i| Query::new(&format!("q{i}"), &format!("Question number {i}?"), TaskType::MultiChoice))
            .collect()
    }

    fn scripted(qs: &[Query], ex: &ExemplarSet) -> ScriptedBackend {
        let b = ScriptedBackend::new();
        for (i, q) in qs.iter().enumerate() {
            let prompt = cok_core::prompt::build_prompt(
                ex.for_task(q.task_type).unwrap(),
                q,
                Default::default(),
                &[],
            )
            .unwrap();
            let letter = if i % 2 == 0 { 'A' } else { 'B' };
            b.push_for(&prompt, vec![format!(" Evidence triples:\n1. (q, is, {i})\nExplanation hints: h.\nSo the answer is ({letter}).")]);
        }
        b
    }

    #[test]
    fn parallel_matches_sequential_and_keeps_order() {
        let ex = ExemplarSet::new(Task::Csqa.builtin_exemplars());
        let qs = queries(9);
        let cfg = RethinkConfig {
            max_iterations: 1,
            ..Default::default()
        };
        let seq = run_dataset(&qs, &ex, &ByAnswer, &scripted(&qs, &ex), &cfg, 1).unwrap();
        let par = run_dataset(&qs, &ex, &ByAnswer, &scripted(&qs, &ex), &cfg, 4).unwrap();
        assert_eq!(seq, par);
        let ids: Vec<_> = par.iter().map(QueryResult::query_id).collect();
        assert_eq!(ids, ["q0", "q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8"]);
    }

    #[test]
    fn exhausted_script_fails_only_that_query() {
        let ex = ExemplarSet::new(Task::Csqa.builtin_exemplars());
        let qs = queries(3);
        let b = scripted(&qs[..2], &ex);
        let cfg = RethinkConfig {
            max_iterations: 2,
            ..Default::default()
        };
        let out = run_dataset(&qs, &ex, &ByAnswer, &b, &cfg, 2).unwrap();
        assert!(matches!(&out[0], QueryResult::Completed(o) if o.iterations.len() == 1));
        // q1 answers (B), so it asks for a second round the script lacks.
        match &out[1] {
            QueryResult::Failed(f) => assert_eq!(f.partial.len(), 1),
            other => panic!("{other:?}"),
        }
        assert!(matches!(&out[2], QueryResult::Failed(f) if f.partial.is_empty()));
    }

    #[test]
    fn empty_and_invalid_inputs() {
        let ex = ExemplarSet::new(Task::Csqa.builtin_exemplars());
        let b = ScriptedBackend::new();
        assert!(run_dataset(&[], &ex, &ByAnswer, &b, &RethinkConfig::default(), 3).unwrap().is_empty());
        assert!(run_dataset(&[], &ex, &ByAnswer, &b, &RethinkConfig::default(), 0).is_err());
        let bad = RethinkConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(run_dataset(&queries(1), &ex, &ByAnswer, &b, &bad, 1).is_err());
    }

    #[test]
    fn missing_exemplar_group_is_a_failed_entry() {
        let mut mixed = Task::Csqa.builtin_exemplars();
        mixed.extend(Task::LastLetters.builtin_exemplars());
        let ex = ExemplarSet::new(mixed);
        let q = [Query::new("n", "How many?", TaskType::Numeric)];
        let out = run_dataset(&q, &ex, &ByAnswer, &ScriptedBackend::new(), &RethinkConfig::default(), 1).unwrap();
        assert!(matches!(&out[0], QueryResult::Failed(f) if f.error.contains("numeric")));
    }
}
