//! The generate → verify → inject-and-regenerate loop.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::encoder::TextEncoder;
use crate::llm::{
    BackendError, DecodingParams, GenerationRequest, LlmBackend, SELF_CONSISTENCY_SAMPLES,
    SELF_CONSISTENCY_TEMPERATURE,
};
use crate::parse::{parse_response, Answer, ReasoningChain};
use crate::prompt::{build_prompt, Exemplar, PromptError, PromptVariant, Query};
use crate::text::fold;
use crate::triple::{Triple, TripleKey};
use crate::verify::{ReliabilityReport, Verifier};

/// Default corrections looked up per low-scoring triple.
pub const DEFAULT_CORRECTIONS_PER_TRIPLE: usize = 2;
/// Default bound on triples injected in one iteration.
pub const DEFAULT_MAX_INJECTED: usize = 6;

/// Scores chains and proposes KB corrections for individual triples.
pub trait ChainScorer {
    fn score(&self, query: &str, chain: &ReasoningChain) -> ReliabilityReport;
    fn corrections(&self, t: &Triple, k: usize) -> Vec<Triple>;
}

impl<E: TextEncoder + ?Sized> ChainScorer for Verifier<'_, E> {
    fn score(&self, query: &str, chain: &ReasoningChain) -> ReliabilityReport {
        Verifier::score(self, query, chain)
    }

    /// KB corrections, rendered with the generated triple's relation wording
    /// whenever both name the same canonical relation.
    fn corrections(&self, t: &Triple, k: usize) -> Vec<Triple> {
        let kb = self.kb();
        let canonical = fold(&kb.aliases().resolve(&t.relation));
        kb.find_corrections(t, k, self.encoder())
            .into_iter()
            .map(|mut c| {
                if fold(&c.relation) == canonical {
                    c.relation = t.relation.clone();
                }
                c
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SelfConsistency {
    pub samples: u32,
    pub temperature: f64,
}

impl Default for SelfConsistency {
    fn default() -> Self {
        Self {
            samples: SELF_CONSISTENCY_SAMPLES,
            temperature: SELF_CONSISTENCY_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RethinkConfig {
    /// N: generation rounds per query.
    pub max_iterations: usize,
    /// θ: reliability a chain must reach to stop early.
    pub threshold: f64,
    pub corrections_per_triple: usize,
    pub max_injected: usize,
    pub self_consistency: Option<SelfConsistency>,
    pub variant: PromptVariant,
    /// Decoding for single-path runs; self-consistency overrides the sample
    /// count and temperature.
    pub decoding: DecodingParams,
    pub model: String,
}

impl Default for RethinkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            threshold: 0.5,
            corrections_per_triple: DEFAULT_CORRECTIONS_PER_TRIPLE,
            max_injected: DEFAULT_MAX_INJECTED,
            self_consistency: None,
            variant: PromptVariant::FullCok,
            decoding: DecodingParams::default(),
            model: String::new(),
        }
    }
}

impl RethinkConfig {
    /// θ may sit on either boundary: 0 accepts the first chain, 1 never
    /// stops early.
    pub fn validate(&self) -> Result<(), RethinkError> {
        let bad = |m: &str| Err(RethinkError::Config(m.into()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if self.corrections_per_triple == 0 {
            return bad("corrections_per_triple must be at least 1");
        }
        if let Some(sc) = &self.self_consistency {
            if sc.samples < 2 {
                return bad("self-consistency needs at least 2 samples");
            }
            if sc.temperature.is_nan() || sc.temperature <= 0.0 {
                return bad("self-consistency needs a positive temperature");
            }
        }
        self.decoding_params()
            .validate()
            .map_err(|e| RethinkError::Config(format!("{e}")))
    }

    pub fn decoding_params(&self) -> DecodingParams {
        match &self.self_consistency {
            Some(sc) => DecodingParams {
                temperature: sc.temperature,
                n_samples: sc.samples,
                ..self.decoding.clone()
            },
            None => self.decoding.clone(),
        }
    }

    fn accepts(&self, combined: f64) -> bool {
        self.threshold < 1.0 && combined >= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub prompt: String,
    pub chain: ReasoningChain,
    pub report: ReliabilityReport,
    /// Corrections added to the next iteration's prompt.
    pub injected: Vec<Triple>,
    /// Every sampled answer, in sample order; empty without self-consistency.
    pub votes: Vec<Option<Answer>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Resolution {
    /// Stopped at this 1-based iteration.
    EarlyExit(usize),
    MaxScoreFallback,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RethinkOutcome {
    pub query_id: String,
    pub iterations: Vec<IterationRecord>,
    pub final_answer: Option<Answer>,
    pub resolution: Resolution,
}

impl RethinkOutcome {
    /// The iteration whose chain supplied the final answer.
    pub fn selected(&self) -> &IterationRecord {
        match self.resolution {
            Resolution::EarlyExit(n) => &self.iterations[n - 1],
            Resolution::MaxScoreFallback => &self.iterations[best_iteration(&self.iterations)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RethinkError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend failed during iteration {}: {source}", partial.len() + 1)]
    Backend {
        source: BackendError,
        /// Iterations completed before the failure.
        partial: Vec<IterationRecord>,
    },
}

/// Index of the highest combined score, earliest on ties.
fn best_iteration(iterations: &[IterationRecord]) -> usize {
    let mut best = 0;
    for (i, it) in iterations.iter().enumerate() {
        if it.report.combined > iterations[best].report.combined {
            best = i;
        }
    }
    best
}

/// Runs queries against shared exemplars, scorer and backend.
pub struct Rethinker<'a, S: ?Sized, B: ?Sized> {
    exemplars: &'a [Exemplar],
    scorer: &'a S,
    llm: &'a B,
    config: RethinkConfig,
}

impl<'a, S, B> Rethinker<'a, S, B>
where
    S: ChainScorer + ?Sized,
    B: LlmBackend + ?Sized,
{
    pub fn new(
        exemplars: &'a [Exemplar],
        scorer: &'a S,
        llm: &'a B,
        config: RethinkConfig,
    ) -> Result<Self, RethinkError> {
        config.validate()?;
        if exemplars.is_empty() {
            return Err(PromptError::NoExemplars.into());
        }
        Ok(Self {
            exemplars,
            scorer,
            llm,
            config,
        })
    }

    pub fn config(&self) -> &RethinkConfig {
        &self.config
    }

    pub fn run_query(&self, query: &Query) -> Result<RethinkOutcome, RethinkError> {
        let cfg = &self.config;
        let query_text = query.text();
        let params = cfg.decoding_params();
        let mut injected: Vec<Triple> = Vec::new();
        let mut seen: BTreeSet<TripleKey> = BTreeSet::new();
        let mut log: Vec<IterationRecord> = Vec::new();

        for n in 1..=cfg.max_iterations {
            let prompt = build_prompt(self.exemplars, query, cfg.variant, &injected)?;
            let request = GenerationRequest {
                model: cfg.model.clone(),
                prompt,
                params: params.clone(),
            };
            let texts = match self.generate(&request) {
                Ok(t) => t,
                Err(source) => return Err(RethinkError::Backend { source, partial: log }),
            };
            let (chain, report, votes) = self.select(&query_text, query, &texts);
            let accepted = cfg.accepts(report.combined);

            let mut fresh = Vec::new();
            if !accepted && n < cfg.max_iterations {
                'triples: for f in &report.factualities {
                    if f.score >= cfg.threshold {
                        continue;
                    }
                    for c in self.scorer.corrections(&f.triple, cfg.corrections_per_triple) {
                        if fresh.len() == cfg.max_injected {
                            break 'triples;
                        }
                        if seen.insert(c.key()) {
                            fresh.push(c);
                        }
                    }
                }
            }
            injected.extend(fresh.iter().cloned());
            log.push(IterationRecord {
                iteration: n,
                prompt: request.prompt,
                chain,
                report,
                injected: fresh,
                votes,
            });
            if accepted {
                let final_answer = log[n - 1].chain.answer.clone();
                return Ok(RethinkOutcome {
                    query_id: query.id.clone(),
                    iterations: log,
                    final_answer,
                    resolution: Resolution::EarlyExit(n),
                });
            }
        }

        let final_answer = log[best_iteration(&log)].chain.answer.clone();
        Ok(RethinkOutcome {
            query_id: query.id.clone(),
            iterations: log,
            final_answer,
            resolution: Resolution::MaxScoreFallback,
        })
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        let response = self.llm.complete(request)?;
        let want = request.params.n_samples as usize;
        if response.texts.len() != want {
            return Err(BackendError::Protocol(format!(
                "expected {want} completion(s), got {}",
                response.texts.len()
            )));
        }
        Ok(response.texts)
    }

    /// Parses and scores every sample; with several samples, majority-votes
    /// the answer and keeps the best-scoring chain among the majority.
    fn select(
        &self,
        query_text: &str,
        query: &Query,
        texts: &[String],
    ) -> (ReasoningChain, ReliabilityReport, Vec<Option<Answer>>) {
        let mut scored: Vec<(ReasoningChain, ReliabilityReport)> = texts
            .iter()
            .map(|t| {
                let chain = parse_response(t, query.task_type);
                let report = self.scorer.score(query_text, &chain);
                (chain, report)
            })
            .collect();
        if self.config.self_consistency.is_none() {
            let (chain, report) = scored.swap_remove(0);
            return (chain, report, Vec::new());
        }
        let votes: Vec<Option<Answer>> = scored.iter().map(|(c, _)| c.answer.clone()).collect();
        let combined: Vec<f64> = scored.iter().map(|(_, r)| r.combined).collect();
        let pick = majority_pick(&votes, &combined);
        let (chain, report) = scored.swap_remove(pick);
        (chain, report, votes)
    }
}

/// Index of the representative sample: the highest-scoring member of the
/// largest answer group. Ties between groups go to the group holding the
/// highest score, then to the earliest representative; ties within a group
/// go to the earliest sample. Samples
/// without an answer only win when no sample has one.
pub fn majority_pick(answers: &[Option<Answer>], scores: &[f64]) -> usize {
    debug_assert_eq!(answers.len(), scores.len());
    // (members, best member)
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut reps: Vec<&Answer> = Vec::new();
    for (i, a) in answers.iter().enumerate() {
        let Some(a) = a else { continue };
        match reps.iter().position(|r| r.matches(a)) {
            Some(g) => {
                groups[g].0 += 1;
                if scores[i] > scores[groups[g].1] {
                    groups[g].1 = i;
                }
            }
            None => {
                reps.push(a);
                groups.push((1, i));
            }
        }
    }
    if groups.is_empty() {
        return best_index(scores);
    }
    let mut best = groups[0];
    for &g in &groups[1..] {
        let tied = g.0 == best.0 && scores[g.1] == scores[best.1];
        if g.0 > best.0 || (g.0 == best.0 && scores[g.1] > scores[best.1]) || (tied && g.1 < best.1) {
            best = g;
        }
    }
    best.1
}

fn best_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Single-query convenience wrapper around [`Rethinker`].
pub fn run_query<S, B>(
    query: &Query,
    exemplars: &[Exemplar],
    scorer: &S,
    llm: &B,
    config: &RethinkConfig,
) -> Result<RethinkOutcome, RethinkError>
where
    S: ChainScorer + ?Sized,
    B: LlmBackend + ?Sized,
{
    Rethinker::new(exemplars, scorer, llm, config.clone())?.run_query(query)
}
