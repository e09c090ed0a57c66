//! Accuracy and run summaries.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::parse::Answer;
use crate::rethink::{Resolution, RethinkOutcome};
use crate::verify::VerificationMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("{predictions} predictions for {gold} gold answers")]
pub struct LengthMismatch {
    pub predictions: usize,
    pub gold: usize,
}

/// Fraction of predictions matching gold; a missing prediction is wrong and
/// an empty run scores 0.
pub fn accuracy(predictions: &[Option<Answer>], gold: &[Answer]) -> Result<f64, LengthMismatch> {
    if predictions.len() != gold.len() {
        return Err(LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let correct = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.as_ref().is_some_and(|p| p.matches(g)))
        .count();
    Ok(correct as f64 / gold.len() as f64)
}

/// Number of queries by iterations executed.
pub fn iteration_histogram<'a>(outcomes: impl IntoIterator<Item = &'a RethinkOutcome>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for o in outcomes {
        *h.entry(o.iterations.len()).or_insert(0) += 1;
    }
    h
}

/// How every generated triple of every iteration was verified.
pub fn method_counts<'a>(
    outcomes: impl IntoIterator<Item = &'a RethinkOutcome>,
) -> BTreeMap<VerificationMethod, usize> {
    let mut counts: BTreeMap<VerificationMethod, usize> = [
        VerificationMethod::Exact,
        VerificationMethod::Implicit,
        VerificationMethod::Unverifiable,
    ]
    .into_iter()
    .map(|m| (m, 0))
    .collect();
    for o in outcomes {
        for it in &o.iterations {
            for f in &it.report.factualities {
                *counts.entry(f.method).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Queries resolved by early exit versus fallback.
pub fn resolution_counts<'a>(outcomes: impl IntoIterator<Item = &'a RethinkOutcome>) -> (usize, usize) {
    outcomes.into_iter().fold((0, 0), |(e, f), o| match o.resolution {
        Resolution::EarlyExit(_) => (e + 1, f),
        Resolution::MaxScoreFallback => (e, f + 1),
    })
}

pub fn predictions(outcomes: &[RethinkOutcome]) -> Vec<Option<Answer>> {
    outcomes.iter().map(|o| o.final_answer.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    #[test]
    fn accuracy_cases() {
        let gold = vec![Answer::Choice('A'), Answer::YesNo(true), Answer::Number(8.0), Answer::Text("eelk".into())];
        let all: Vec<_> = gold.iter().cloned().map(Some).collect();
        assert_eq!(accuracy(&all, &gold), Ok(1.0));
        let none = vec![None, Some(Answer::YesNo(false)), Some(Answer::Number(8.1)), Some(Answer::Text("eeik".into()))];
        assert_eq!(accuracy(&none, &gold), Ok(0.0));
        let half = vec![
            Some(Answer::Choice('A')),
            None,
            Some(Answer::Number(8.0 + 1e-9)),
            Some(Answer::Text(String::from("x"))),
        ];
        assert_eq!(accuracy(&half, &gold), Ok(0.5));
        assert_eq!(accuracy(&[], &[]), Ok(0.0));
        assert_eq!(accuracy(&[None], &[]), Err(LengthMismatch { predictions: 1, gold: 0 }));
    }

    #[test]
    fn text_answers_compare_folded() {
        assert_eq!(accuracy(&[Some(Answer::Text(" EELK ".into()))], &[Answer::Text("eelk".into())]), Ok(1.0));
    }
}
