//! Factuality and faithfulness scoring, and their combination into a single
//! reliability score `C = γ·mean(f_v) + (1 − γ)·f_u`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::embed::{EmbeddingModel, LinkResult, Linker, DEFAULT_LINK_THRESHOLD};
use crate::encoder::{words, TextEncoder};
use crate::kb::KnowledgeBase;
use crate::parse::{answer_sentence, ReasoningChain};
use crate::text::fold;
use crate::triple::Triple;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("gamma must lie in (0, 1), got {0}")]
    Gamma(f64),
    #[error("faithfulness must lie in [0, 1], got {0}")]
    Faithfulness(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum VerificationMethod {
    Exact,
    Implicit,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactualityResult {
    pub score: f64,
    pub method: VerificationMethod,
    pub triple: Triple,
    /// Subject, relation and object links; absent for exact hits.
    pub links: Option<[LinkResult; 3]>,
}

/// Which terms feed the combined score. `Both` is the full method; the other
/// two are the single-signal ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScoreMode {
    #[default]
    Both,
    FactualityOnly,
    FaithfulnessOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FaithfulnessMetric {
    /// Clamped encoder cosine between the explanation and query+triples+answer.
    #[default]
    Encoder,
    /// Token-overlap F1 between the explanation and the triples.
    KnowledgeF1,
}

pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VerifyConfig {
    pub gamma: f64,
    pub link_threshold: f64,
    pub mode: ScoreMode,
    pub faithfulness: FaithfulnessMetric,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            link_threshold: DEFAULT_LINK_THRESHOLD,
            mode: ScoreMode::Both,
            faithfulness: FaithfulnessMetric::Encoder,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReliabilityReport {
    pub factualities: Vec<FactualityResult>,
    pub faithfulness: f64,
    pub gamma: f64,
    pub mode: ScoreMode,
    pub combined: f64,
}

impl ReliabilityReport {
    pub fn mean_factuality(&self) -> f64 {
        mean(self.factualities.iter().map(|f| f.score))
    }
}

/// Mean of the scores, 0 for an empty chain.
fn mean(scores: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = scores.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `γ·mean(f_v) + (1 − γ)·f_u`; the factuality term is 0 without triples.
pub fn reliability(factualities: &[f64], faithfulness: f64, gamma: f64) -> Result<f64, VerifyError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(VerifyError::Gamma(gamma));
    }
    if !(0.0..=1.0).contains(&faithfulness) {
        return Err(VerifyError::Faithfulness(faithfulness));
    }
    let c = gamma * mean(factualities.iter().copied()) + (1.0 - gamma) * faithfulness;
    Ok(c.clamp(0.0, 1.0))
}

/// The text the explanation is compared against: query, one rendered triple
/// per line, then the answer sentence.
pub fn faithfulness_reference(query: &str, triples: &[Triple], answer: &str) -> String {
    let mut parts: Vec<String> = Vec::with_capacity(triples.len() + 2);
    parts.push(String::from(query));
    parts.extend(triples.iter().map(Triple::render));
    parts.push(String::from(answer));
    parts.join("\n")
}

/// `max(0, cos(encode(reference), encode(explanation)))`.
pub fn faithfulness<E: TextEncoder + ?Sized>(
    encoder: &E,
    query: &str,
    triples: &[Triple],
    answer: &str,
    explanation: &str,
) -> f64 {
    let reference = faithfulness_reference(query, triples, answer);
    encoder.similarity(&reference, explanation).clamp(0.0, 1.0)
}

fn token_counts(text: &str) -> alloc::collections::BTreeMap<String, usize> {
    let mut m = alloc::collections::BTreeMap::new();
    for w in words(&fold(text)) {
        *m.entry(String::from(w)).or_insert(0) += 1;
    }
    m
}

/// Unigram F1 between the explanation tokens and the triple tokens
/// (lowercased, punctuation dropped). 0 when either side is empty.
pub fn kf1(explanation: &str, triples: &[Triple]) -> f64 {
    let exp = token_counts(explanation);
    let mut knowledge = alloc::collections::BTreeMap::new();
    for t in triples {
        for (w, n) in token_counts(&t.render()) {
            *knowledge.entry(w).or_insert(0) += n;
        }
    }
    let exp_total: usize = exp.values().sum();
    let kn_total: usize = knowledge.values().sum();
    if exp_total == 0 || kn_total == 0 {
        return 0.0;
    }
    let overlap: usize = exp
        .iter()
        .map(|(w, n)| (*n).min(knowledge.get(w).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / exp_total as f64;
    let recall = overlap as f64 / kn_total as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Scores evidence and explanations against one KB/model pair. Vocabulary
/// encodings are computed once at construction.
pub struct Verifier<'a, E: TextEncoder + ?Sized> {
    kb: &'a KnowledgeBase,
    linker: Option<Linker<'a, E>>,
    encoder: &'a E,
    config: VerifyConfig,
}

impl<'a, E: TextEncoder + ?Sized> Verifier<'a, E> {
    pub fn new(
        kb: &'a KnowledgeBase,
        model: Option<&'a EmbeddingModel>,
        encoder: &'a E,
        config: VerifyConfig,
    ) -> Result<Self, VerifyError> {
        if !(config.gamma > 0.0 && config.gamma < 1.0) {
            return Err(VerifyError::Gamma(config.gamma));
        }
        let linker = model.map(|m| Linker::new(m, encoder, config.link_threshold, kb.aliases().clone()));
        Ok(Self {
            kb,
            linker,
            encoder,
            config,
        })
    }

    pub fn config(&self) -> &VerifyConfig {
        &self.config
    }

    pub fn kb(&self) -> &KnowledgeBase {
        self.kb
    }

    pub fn encoder(&self) -> &E {
        self.encoder
    }

    /// Exact membership first; otherwise the embedding model, if every slot
    /// links; otherwise the neutral 0.5.
    pub fn factuality(&self, t: &Triple) -> FactualityResult {
        if self.kb.contains(t) {
            return FactualityResult {
                score: 1.0,
                method: VerificationMethod::Exact,
                triple: t.clone(),
                links: None,
            };
        }
        match &self.linker {
            Some(linker) => {
                let s = linker.score(t);
                FactualityResult {
                    score: s.score,
                    method: if s.verifiable() {
                        VerificationMethod::Implicit
                    } else {
                        VerificationMethod::Unverifiable
                    },
                    triple: t.clone(),
                    links: Some(s.links),
                }
            }
            None => FactualityResult {
                score: crate::embed::UNVERIFIABLE_SCORE,
                method: VerificationMethod::Unverifiable,
                triple: t.clone(),
                links: None,
            },
        }
    }

    pub fn faithfulness(&self, query: &str, chain: &ReasoningChain) -> f64 {
        match self.config.faithfulness {
            FaithfulnessMetric::Encoder => {
                let answer = chain.answer.as_ref().map(answer_sentence).unwrap_or_default();
                faithfulness(self.encoder, query, &chain.evidence_triples, &answer, &chain.explanation)
            }
            FaithfulnessMetric::KnowledgeF1 => kf1(&chain.explanation, &chain.evidence_triples),
        }
    }

    pub fn score(&self, query: &str, chain: &ReasoningChain) -> ReliabilityReport {
        let factualities: Vec<FactualityResult> =
            chain.evidence_triples.iter().map(|t| self.factuality(t)).collect();
        let faith = self.faithfulness(query, chain);
        let fv = mean(factualities.iter().map(|f| f.score));
        let gamma = self.config.gamma;
        let combined = match self.config.mode {
            ScoreMode::Both => gamma * fv + (1.0 - gamma) * faith,
            ScoreMode::FactualityOnly => fv,
            ScoreMode::FaithfulnessOnly => faith,
        }
        .clamp(0.0, 1.0);
        ReliabilityReport {
            factualities,
            faithfulness: faith,
            gamma,
            mode: self.config.mode,
            combined,
        }
    }
}

/// One-off factuality with the default link threshold.
pub fn factuality<E: TextEncoder + ?Sized>(
    kb: &KnowledgeBase,
    model: Option<&EmbeddingModel>,
    encoder: &E,
    t: &Triple,
) -> FactualityResult {
    Verifier::new(kb, model, encoder, VerifyConfig::default())
        .expect("default gamma is valid")
        .factuality(t)
}
