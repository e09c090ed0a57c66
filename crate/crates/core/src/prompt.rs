//! Exemplars and chain-of-knowledge prompt rendering.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::TextEncoder;
use crate::kb::KnowledgeBase;
use crate::llm::{BackendError, DecodingParams, GenerationRequest, LlmBackend};
use crate::parse::{render_block, Answer, TaskType};
use crate::triple::Triple;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("at least one exemplar is required")]
    NoExemplars,
    #[error("exemplar {0} has no evidence triples")]
    MissingTriples(usize),
    #[error("beta must lie in [0, 100], got {0}")]
    Beta(f64),
    #[error("cannot draw replacement triples from an empty knowledge base")]
    EmptyKb,
    #[error("the knowledge base holds no triple other than the one being replaced")]
    NoAlternative,
}

/// Letter → option text, in letter order.
pub type Choices = BTreeMap<char, String>;

fn render_choices(choices: &Choices) -> String {
    let mut out = String::from("Answer Choices:");
    for (letter, text) in choices {
        out.push_str(&format!(" ({letter}) {text}"));
    }
    out
}

/// A test question.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Query {
    pub id: String,
    pub question: String,
    pub choices: Option<Choices>,
    pub task_type: TaskType,
}

impl Query {
    pub fn new(id: &str, question: &str, task_type: TaskType) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            choices: None,
            task_type,
        }
    }

    /// Question followed by the answer-choices line, if any.
    pub fn text(&self) -> String {
        match &self.choices {
            Some(c) if !c.is_empty() => format!("{}\n{}", self.question, render_choices(c)),
            _ => self.question.clone(),
        }
    }
}

/// An annotated demonstration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Exemplar {
    pub question: String,
    pub choices: Option<Choices>,
    pub evidence_triples: Vec<Triple>,
    pub explanation: String,
    pub answer: Answer,
    pub task_type: TaskType,
}

impl Exemplar {
    /// The block after `"A: "`, as the model is expected to produce it.
    pub fn answer_block(&self, variant: PromptVariant) -> String {
        render_block(
            &self.evidence_triples,
            &self.explanation,
            Some(&self.answer),
            variant != PromptVariant::WithoutEvidenceTriples,
            variant != PromptVariant::WithoutExplanationHints,
        )
    }
}

/// Full prompt or one of the two ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PromptVariant {
    #[default]
    FullCok,
    WithoutEvidenceTriples,
    WithoutExplanationHints,
}

/// Exemplars, then the query, then any injected knowledge triples (one
/// `(s, r, o)` per line), ending with `A:`.
pub fn build_prompt(
    exemplars: &[Exemplar],
    query: &Query,
    variant: PromptVariant,
    injected: &[Triple],
) -> Result<String, PromptError> {
    if exemplars.is_empty() {
        return Err(PromptError::NoExemplars);
    }
    let mut out = String::new();
    for (i, ex) in exemplars.iter().enumerate() {
        if variant != PromptVariant::WithoutEvidenceTriples && ex.evidence_triples.is_empty() {
            return Err(PromptError::MissingTriples(i));
        }
        out.push_str("Q: ");
        out.push_str(&ex.question);
        out.push('\n');
        if let Some(c) = ex.choices.as_ref().filter(|c| !c.is_empty()) {
            out.push_str(&render_choices(c));
            out.push('\n');
        }
        out.push_str("A: ");
        out.push_str(&ex.answer_block(variant));
        out.push('\n');
    }
    out.push_str("Q: ");
    out.push_str(&query.text());
    out.push('\n');
    for t in injected {
        out.push_str(&t.render());
        out.push('\n');
    }
    out.push_str("A:");
    Ok(out)
}

/// Returns the exemplars in a seed-determined order.
pub fn permute_exemplars(exemplars: &[Exemplar], seed: u64) -> Vec<Exemplar> {
    let mut out = exemplars.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub exemplars: Vec<Exemplar>,
    /// `(exemplar index, triple index)` of every replaced triple, sorted.
    pub replaced: Vec<(usize, usize)>,
}

/// Replaces `round(beta_percent / 100 × total)` evidence triples, chosen
/// uniformly without replacement, with uniformly drawn KB triples. A
/// replacement never equals the triple it replaces.
pub fn perturb_exemplars(
    exemplars: &[Exemplar],
    beta_percent: f64,
    kb: &KnowledgeBase,
    seed: u64,
) -> Result<Perturbation, PromptError> {
    if !(0.0..=100.0).contains(&beta_percent) {
        return Err(PromptError::Beta(beta_percent));
    }
    let slots: Vec<(usize, usize)> = exemplars
        .iter()
        .enumerate()
        .flat_map(|(e, ex)| (0..ex.evidence_triples.len()).map(move |t| (e, t)))
        .collect();
    let count = libm::round(beta_percent / 100.0 * slots.len() as f64) as usize;
    let mut out = exemplars.to_vec();
    if count == 0 {
        return Ok(Perturbation {
            exemplars: out,
            replaced: Vec::new(),
        });
    }
    if kb.is_empty() {
        return Err(PromptError::EmptyKb);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, slots.len(), count)
        .into_iter()
        .map(|i| slots[i])
        .collect();
    chosen.sort_unstable();
    for &(e, t) in &chosen {
        let pick = match kb.id_of(&out[e].evidence_triples[t]) {
            Some(_) if kb.len() == 1 => return Err(PromptError::NoAlternative),
            Some(skip) => {
                let p = rng.random_range(0..kb.len() - 1);
                p + usize::from(p >= skip)
            }
            None => rng.random_range(0..kb.len()),
        };
        out[e].evidence_triples[t] = kb.triples()[pick].clone();
    }
    Ok(Perturbation {
        exemplars: out,
        replaced: chosen,
    })
}

pub const ZERO_SHOT_TRIGGER: &str = "Let's think step by step.";

/// An unreviewed exemplar draft: a zero-shot rationale plus KB triples an
/// annotator can pick evidence from.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExemplarDraft {
    pub question: String,
    pub explanation: String,
    pub candidates: Vec<(Triple, f64)>,
    pub reviewed: bool,
}

pub fn assist_exemplar_construction<B, E>(
    question: &str,
    llm: &B,
    model: &str,
    kb: &KnowledgeBase,
    encoder: &E,
    k: usize,
) -> Result<ExemplarDraft, BackendError>
where
    B: LlmBackend + ?Sized,
    E: TextEncoder + ?Sized,
{
    let request = GenerationRequest {
        model: model.into(),
        prompt: format!("{question}\n{ZERO_SHOT_TRIGGER}"),
        params: DecodingParams::default(),
    };
    let response = llm.complete(&request)?;
    let explanation: String = response
        .texts
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Protocol("empty completion list".into()))?
        .trim()
        .to_owned();
    let candidates = kb.retrieve_similar(&explanation, k, encoder);
    Ok(ExemplarDraft {
        question: question.into(),
        explanation,
        candidates,
        reviewed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::HashedNgramEncoder;
    use crate::kb::{AliasTable, KbBuilder};
    use crate::parse::{parse_response, ReasoningChain};
    use alloc::vec;
    use std::sync::Mutex;

    fn t(s: &str, r: &str, o: &str) -> Triple {
        Triple::new(s, r, o).unwrap()
    }

    fn elon() -> Exemplar {
        Exemplar {
            question: "Take the last letters of the words in \"Elon Musk\" and concatenate them.".into(),
            choices: None,
            evidence_triples: vec![
                t("Elon", "last latter", "n"),
                t("Musk", "last latter", "k"),
                t("final answer", "is", "nk"),
            ],
            explanation: "The last letter of \"Elon\" is \"n\". The last letter of \"Musk\" is \"k\". Concatenating them is \"nk\".".into(),
            answer: Answer::Text("nk".into()),
            task_type: TaskType::StringConcat,
        }
    }

    fn query() -> Query {
        Query::new(
            "q1",
            "Take the last letters of each words in \"Prince Rene Vishal Patrick\" and concatenate them.",
            TaskType::StringConcat,
        )
    }

    #[test]
    fn renders_letter_exemplar() {
        let p = build_prompt(&[elon()], &query(), PromptVariant::FullCok, &[]).unwrap();
        assert!(p.starts_with("Q: Take the last letters of the words in \"Elon Musk\""));
        assert!(p.contains("\nA: Evidence triples:\n1. (Elon, last latter, n)\n2. (Musk, last latter, k)\n"));
        assert!(p.contains("So the answer is nk.\n\nQ: Take the last letters of each words"));
        assert!(p.ends_with("concatenate them.\nA:"));
    }

    #[test]
    fn injection_follows_question() {
        let inj = [t("Vishal", "last latter", "l")];
        let p = build_prompt(&[elon()], &query(), PromptVariant::FullCok, &inj).unwrap();
        assert!(p.ends_with("concatenate them.\n(Vishal, last latter, l)\nA:"));
    }

    #[test]
    fn variants_drop_sections() {
        let p = build_prompt(&[elon()], &query(), PromptVariant::WithoutEvidenceTriples, &[]).unwrap();
        assert!(!p.lines().any(|l| l.starts_with("Evidence triples:") || l.contains("A: Evidence")));
        assert!(p.contains("A: Explanation hints: The last letter"));
        let p = build_prompt(&[elon()], &query(), PromptVariant::WithoutExplanationHints, &[]).unwrap();
        assert!(!p.contains("Explanation hints:"));
        assert!(p.contains("3. (final answer, is, nk)\nSo the answer is nk."));
    }

    #[test]
    fn multi_choice_exemplar_renders_choices() {
        let ex = Exemplar {
            question: "Which uses gills to breathe?".into(),
            choices: Some([('A', "hermit crab".into()), ('B', "human".into())].into_iter().collect()),
            evidence_triples: vec![t("hermit crab", "hasA", "gills")],
            explanation: "Only hermit crabs have gills.".into(),
            answer: Answer::Choice('A'),
            task_type: TaskType::MultiChoice,
        };
        let p = build_prompt(&[ex], &query(), PromptVariant::FullCok, &[]).unwrap();
        assert!(p.contains("Which uses gills to breathe?\nAnswer Choices: (A) hermit crab (B) human\nA: Evidence"));
        assert!(p.contains("So the answer is (A).\n"));
    }

    #[test]
    fn errors() {
        assert_eq!(build_prompt(&[], &query(), PromptVariant::FullCok, &[]), Err(PromptError::NoExemplars));
        let mut bad = elon();
        bad.evidence_triples.clear();
        assert_eq!(
            build_prompt(&[elon(), bad.clone()], &query(), PromptVariant::FullCok, &[]),
            Err(PromptError::MissingTriples(1))
        );
        assert!(build_prompt(&[bad], &query(), PromptVariant::WithoutEvidenceTriples, &[]).is_ok());
    }

    #[test]
    fn answer_block_round_trips() {
        let ex = elon();
        let parsed = parse_response(&ex.answer_block(PromptVariant::FullCok), ex.task_type);
        let expect = ReasoningChain {
            evidence_triples: ex.evidence_triples.clone(),
            explanation: ex.explanation.clone(),
            answer: Some(ex.answer.clone()),
            warnings: vec![],
        };
        assert_eq!(parsed, expect);
    }

    fn letters_kb() -> KnowledgeBase {
        let mut b = KbBuilder::new(AliasTable::with_defaults());
        b.add_tsv("a\tr\tb\nc\tr\td\ne\tr\tf\n", "kb", None).unwrap();
        b.build()
    }

    fn eight_triples() -> Vec<Exemplar> {
        let mut a = elon();
        a.evidence_triples.push(t("x", "y", "z"));
        let mut b = elon();
        b.evidence_triples.push(t("u", "v", "w"));
        vec![a, b]
    }

    #[test]
    fn perturbation_counts() {
        let kb = letters_kb();
        let ex = eight_triples();
        let p0 = perturb_exemplars(&ex, 0.0, &kb, 1).unwrap();
        assert_eq!(p0.exemplars, ex);
        let p50 = perturb_exemplars(&ex, 50.0, &kb, 7).unwrap();
        assert_eq!(p50.replaced.len(), 4);
        assert_eq!(perturb_exemplars(&ex, 50.0, &kb, 7).unwrap(), p50);
        for (e, t) in &p50.replaced {
            assert!(kb.contains(&p50.exemplars[*e].evidence_triples[*t]));
        }
        assert_eq!(p50.exemplars[0].explanation, ex[0].explanation);
        let p100 = perturb_exemplars(&ex, 100.0, &kb, 3).unwrap();
        assert_eq!(p100.replaced.len(), 8);
        assert!(p100.exemplars.iter().flat_map(|e| &e.evidence_triples).all(|t| kb.contains(t)));
        assert_eq!(perturb_exemplars(&ex, 101.0, &kb, 3), Err(PromptError::Beta(101.0)));
        let empty = KbBuilder::default().build();
        assert_eq!(perturb_exemplars(&ex, 25.0, &empty, 3), Err(PromptError::EmptyKb));
    }

    struct Canned {
        text: &'static str,
        seen: Mutex<Vec<GenerationRequest>>,
    }

    impl LlmBackend for Canned {
        fn complete(&self, request: &GenerationRequest) -> Result<crate::llm::GenerationResponse, BackendError> {
            self.seen.lock().unwrap().push(request.clone());
            Ok(crate::llm::GenerationResponse { texts: vec![self.text.into()], usage: None })
        }
    }

    #[test]
    fn drafts_use_zero_shot_prompt() {
        let llm = Canned { text: " The ferret is an animal. ", seen: Mutex::new(vec![]) };
        let kb = letters_kb();
        let d = assist_exemplar_construction("Q?", &llm, "m", &kb, &HashedNgramEncoder, 2).unwrap();
        assert_eq!(d.explanation, "The ferret is an animal.");
        assert_eq!(d.candidates.len(), 2);
        assert!(!d.reviewed);
        {
            let seen = llm.seen.lock().unwrap();
            assert_eq!(seen[0].prompt, "Q?\nLet's think step by step.");
            assert_eq!(seen[0].params.temperature, 0.0);
        }
        let d = assist_exemplar_construction("Q?", &llm, "m", &kb, &HashedNgramEncoder, 0).unwrap();
        assert!(d.candidates.is_empty());
        let one = KnowledgeBase::from_triples(&[t("a", "r", "b")], AliasTable::empty());
        let d = assist_exemplar_construction("Q?", &llm, "m", &one, &HashedNgramEncoder, 5).unwrap();
        assert_eq!(d.candidates.len(), 1);
        assert_eq!(d.candidates[0].0, t("a", "r", "b"));
    }
}
