//! Grounding generated surface strings in the model vocabulary, and the
//! energy-based plausibility score built on top of it.

use alloc::vec::Vec;

use super::{EmbeddingModel, IdTriple, Vocab};
use crate::encoder::{Embedding, TextEncoder};
use crate::kb::AliasTable;
use crate::triple::Triple;

pub const DEFAULT_LINK_THRESHOLD: f64 = 0.85;

/// Outcome of grounding one surface string.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LinkResult {
    Linked { index: u32, similarity: f64 },
    Unlinked,
}

impl LinkResult {
    pub fn index(&self) -> Option<u32> {
        match self {
            LinkResult::Linked { index, .. } => Some(*index),
            LinkResult::Unlinked => None,
        }
    }

    pub fn is_linked(&self) -> bool {
        matches!(self, LinkResult::Linked { .. })
    }
}

fn resolve_surface(surface: &str, aliases: Option<&AliasTable>) -> alloc::string::String {
    match aliases {
        Some(a) => a.resolve(surface),
        None => crate::text::normalize(surface),
    }
}

/// Highest-similarity entry, first in key order on ties.
fn best_match<'v>(
    candidates: impl Iterator<Item = (u32, &'v Embedding)>,
    query: &Embedding,
) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for (idx, emb) in candidates {
        let sim = emb.dot(query).clamp(-1.0, 1.0);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((idx, sim));
        }
    }
    best
}

fn decide(best: Option<(u32, f64)>, threshold: f64) -> LinkResult {
    match best {
        Some((index, similarity)) if similarity >= threshold => LinkResult::Linked {
            index,
            similarity: similarity.clamp(0.0, 1.0),
        },
        _ => LinkResult::Unlinked,
    }
}

/// Links `surface` to `vocab`: an exact (normalized, alias-resolved) match
/// links with similarity 1; otherwise the most similar entry links if it
/// reaches `threshold`.
pub fn link<E: TextEncoder + ?Sized>(
    vocab: &Vocab,
    surface: &str,
    encoder: &E,
    threshold: f64,
    aliases: Option<&AliasTable>,
) -> LinkResult {
    let resolved = resolve_surface(surface, aliases);
    if let Some(index) = vocab.get(&resolved) {
        return LinkResult::Linked {
            index,
            similarity: 1.0,
        };
    }
    let query = encoder.encode(&resolved);
    let encoded: Vec<(u32, Embedding)> = vocab
        .entries()
        .map(|(key, i)| (i, encoder.encode(key)))
        .collect();
    decide(best_match(encoded.iter().map(|(i, e)| (*i, e)), &query), threshold)
}

/// Plausibility of a triple under the embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitScore {
    /// `1 / (1 + energy)` when every slot links, otherwise 0.5.
    pub score: f64,
    pub energy: Option<f64>,
    pub prototype: Option<usize>,
    pub links: [LinkResult; 3],
}

impl ImplicitScore {
    pub fn verifiable(&self) -> bool {
        self.energy.is_some()
    }
}

pub const UNVERIFIABLE_SCORE: f64 = 0.5;

/// Links triples against a model with the vocabulary encodings computed once.
pub struct Linker<'a, E: TextEncoder + ?Sized> {
    model: &'a EmbeddingModel,
    encoder: &'a E,
    threshold: f64,
    aliases: AliasTable,
    entity_vecs: Vec<(u32, Embedding)>,
    relation_vecs: Vec<(u32, Embedding)>,
}

impl<'a, E: TextEncoder + ?Sized> Linker<'a, E> {
    pub fn new(model: &'a EmbeddingModel, encoder: &'a E, threshold: f64, aliases: AliasTable) -> Self {
        let encode_all = |v: &Vocab| -> Vec<(u32, Embedding)> {
            v.entries().map(|(k, i)| (i, encoder.encode(k))).collect()
        };
        Self {
            entity_vecs: encode_all(&model.entities),
            relation_vecs: encode_all(&model.relations),
            model,
            encoder,
            threshold,
            aliases,
        }
    }

    pub fn model(&self) -> &EmbeddingModel {
        self.model
    }

    fn link_in(&self, vocab: &Vocab, vecs: &[(u32, Embedding)], surface: &str, aliases: Option<&AliasTable>) -> LinkResult {
        let resolved = resolve_surface(surface, aliases);
        if let Some(index) = vocab.get(&resolved) {
            return LinkResult::Linked {
                index,
                similarity: 1.0,
            };
        }
        let query = self.encoder.encode(&resolved);
        decide(best_match(vecs.iter().map(|(i, e)| (*i, e)), &query), self.threshold)
    }

    pub fn link_entity(&self, surface: &str) -> LinkResult {
        self.link_in(&self.model.entities, &self.entity_vecs, surface, None)
    }

    pub fn link_relation(&self, surface: &str) -> LinkResult {
        self.link_in(&self.model.relations, &self.relation_vecs, surface, Some(&self.aliases))
    }

    pub fn score(&self, t: &Triple) -> ImplicitScore {
        let links = [
            self.link_entity(&t.subject),
            self.link_relation(&t.relation),
            self.link_entity(&t.object),
        ];
        match (links[0].index(), links[1].index(), links[2].index()) {
            (Some(head), Some(relation), Some(tail)) => {
                let (c, e) = self.model.best_energy(IdTriple { head, relation, tail });
                ImplicitScore {
                    score: 1.0 / (1.0 + e),
                    energy: Some(e),
                    prototype: Some(c),
                    links,
                }
            }
            _ => ImplicitScore {
                score: UNVERIFIABLE_SCORE,
                energy: None,
                prototype: None,
                links,
            },
        }
    }
}

/// One-off scoring with the default threshold and alias table. Encodes the
/// whole vocabulary; use a [`Linker`] for repeated calls.
pub fn implicit_score<E: TextEncoder + ?Sized>(model: &EmbeddingModel, t: &Triple, encoder: &E) -> ImplicitScore {
    Linker::new(model, encoder, DEFAULT_LINK_THRESHOLD, AliasTable::with_defaults()).score(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::HashedNgramEncoder;
    use alloc::string::ToString;
    use alloc::vec;

    fn vocab(names: &[&str]) -> Vocab {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// d = 2 model with a single relation whose energy we can set by hand.
    fn model() -> EmbeddingModel {
        EmbeddingModel {
            dim: 2,
            alpha: 1.0,
            entities: vocab(&["ferret", "animal", "rock"]),
            relations: vocab(&["isA", "last letter"]),
            entity_emb: vec![1.0, 0.0, 1.0, 1.0, -1.0, 0.0],
            relation_emb: vec![0.0, 1.0, 0.0, 0.0],
            prototypes: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            projections: vec![vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0]],
        }
    }

    #[test]
    fn exact_match_links_with_similarity_one() {
        let v = vocab(&["ferret", "animal"]);
        assert_eq!(
            link(&v, " Ferret", &HashedNgramEncoder, 0.85, None),
            LinkResult::Linked { index: 0, similarity: 1.0 }
        );
    }

    #[test]
    fn alias_links_to_canonical() {
        let v = vocab(&["isA", "last letter"]);
        let a = AliasTable::with_defaults();
        assert_eq!(
            link(&v, "last latter", &HashedNgramEncoder, 0.85, Some(&a)),
            LinkResult::Linked { index: 1, similarity: 1.0 }
        );
    }

    #[test]
    fn dissimilar_surface_is_unlinked() {
        let v = vocab(&["ferret", "animal"]);
        assert_eq!(link(&v, "Zqxv17", &HashedNgramEncoder, 0.85, None), LinkResult::Unlinked);
        // the same surface links once the threshold is low enough
        assert!(link(&v, "ferrets", &HashedNgramEncoder, 0.3, None).is_linked());
    }

    #[test]
    fn zero_energy_scores_one() {
        let m = model();
        let s = implicit_score(&m, &Triple::new("ferret", "isA", "animal").unwrap(), &HashedNgramEncoder);
        assert_eq!(s.energy, Some(0.0));
        assert_eq!(s.score, 1.0);
    }

    #[test]
    fn energy_three_scores_quarter() {
        let mut m = model();
        // s − o + c = (0, −1) and c − r = (0, √2): energy = 1 + 2
        m.relation_emb[2..4].copy_from_slice(&[0.0, -libm::sqrt(2.0)]);
        let s = implicit_score(&m, &Triple::new("ferret", "last latter", "animal").unwrap(), &HashedNgramEncoder);
        assert!((s.energy.unwrap() - 3.0).abs() < 1e-12);
        assert!((s.score - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unknown_entity_is_unverifiable() {
        let s = implicit_score(&model(), &Triple::new("Zqxv17", "isA", "animal").unwrap(), &HashedNgramEncoder);
        assert_eq!(s.score, 0.5);
        assert!(!s.verifiable());
        assert_eq!(s.links[0], LinkResult::Unlinked);
    }
}
