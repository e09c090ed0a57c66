use std::cmp::Ordering;

use cok_core::encoder::{HashedNgramEncoder, TextEncoder};
use cok_core::kb::{AliasTable, KnowledgeBase};
use cok_core::text::fold;
use cok_core::verify::{factuality, VerificationMethod};
use cok_core::Triple;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ENTITIES: &[&str] = &[
    "ferret", "Great Britain", "North Carolina", "hutch", "apple", "Vishal", "river bank", "glass",
    "Paris", "copper", "whale", "moon", "desk", "ink", "blotter", "coin", "tree", "salt",
    "ocean", "mountain", "guitar", "bread", "violin", "sparrow", "volcano",
];
const RELATIONS: &[&str] = &["isA", "located in", "last letter", "usage", "part of", "made of", "popular"];

fn random_triple(rng: &mut ChaCha8Rng) -> Triple {
    Triple::new(
        ENTITIES.choose(rng).unwrap(),
        RELATIONS.choose(rng).unwrap(),
        ENTITIES.choose(rng).unwrap(),
    )
    .unwrap()
}

fn random_kb(rng: &mut ChaCha8Rng, n: usize) -> (KnowledgeBase, Vec<Triple>) {
    let mut triples = Vec::new();
    let mut keys = std::collections::BTreeSet::new();
    while triples.len() < n {
        let mut t = random_triple(rng);
        // Extra objects widen the space beyond the entity list.
        if rng.random_bool(0.5) {
            t.object = format!("{} {}", t.object, rng.random_range(0..40));
        }
        if keys.insert(t.key()) {
            triples.push(t);
        }
    }
    (KnowledgeBase::from_triples(&triples, AliasTable::with_defaults()), triples)
}

/// Membership by scanning every stored triple.
fn brute_force_contains(stored: &[Triple], aliases: &AliasTable, q: &Triple) -> bool {
    let rel = |r: &str| fold(&aliases.resolve(r));
    stored.iter().any(|t| {
        fold(&t.subject) == fold(&q.subject) && rel(&t.relation) == rel(&q.relation) && fold(&t.object) == fold(&q.object)
    })
}

fn jitter_case(rng: &mut ChaCha8Rng, s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| if rng.random_bool(0.3) { c.to_ascii_uppercase() } else { c })
        .collect();
    if rng.random_bool(0.3) {
        out = format!("  {out} ");
    }
    out
}

#[test]
fn exact_verification_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (kb, stored) = random_kb(&mut rng, 1000);
    assert_eq!(kb.len(), 1000);
    let aliases = AliasTable::with_defaults();
    let enc = HashedNgramEncoder;
    let mut hits = 0;
    for i in 0..10_000 {
        let q = match i % 4 {
            0 => stored.choose(&mut rng).unwrap().clone(),
            1 => {
                let t = stored.choose(&mut rng).unwrap();
                let rel = if fold(&t.relation) == "last letter" { "Last Latter".to_string() } else { jitter_case(&mut rng, &t.relation) };
                Triple::new(&jitter_case(&mut rng, &t.subject), &rel, &jitter_case(&mut rng, &t.object)).unwrap()
            }
            2 => {
                let t = stored.choose(&mut rng).unwrap();
                Triple::new(&t.subject, &t.relation, &format!("{}x", t.object)).unwrap()
            }
            _ => random_triple(&mut rng),
        };
        let want = brute_force_contains(&stored, &aliases, &q);
        assert_eq!(kb.contains(&q), want, "{q}");
        let f = factuality(&kb, None, &enc, &q);
        assert_eq!(f.method == VerificationMethod::Exact, want, "{q}");
        assert_eq!(f.score, if want { 1.0 } else { 0.5 });
        hits += usize::from(want);
    }
    assert!(hits > 4000 && hits < 10_000, "queries should mix hits and misses: {hits}");
}

fn dense_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top-k by repeated linear scans for the best remaining triple: higher
/// score first, then folded key order.
fn exhaustive_scan(stored: &[Triple], query: &str, k: usize) -> Vec<(Triple, f64)> {
    let enc = HashedNgramEncoder;
    let q = enc.encode(query).to_dense();
    let scored: Vec<(Triple, f64)> = stored
        .iter()
        .map(|t| (t.clone(), dense_dot(&enc.encode(&t.render()).to_dense(), &q)))
        .collect();
    let mut used = vec![false; scored.len()];
    let mut out = Vec::new();
    for _ in 0..k.min(scored.len()) {
        let mut best: Option<usize> = None;
        for (i, (t, s)) in scored.iter().enumerate() {
            if used[i] {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => match s.partial_cmp(&scored[b].1).unwrap() {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => t.key() < scored[b].0.key(),
                },
            };
            if better {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        out.push(scored[b].clone());
    }
    out
}

#[test]
fn retrieval_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (kb, stored) = random_kb(&mut rng, 200);
    let enc = HashedNgramEncoder;
    let index = kb.embed(&enc);
    for i in 0..100 {
        let query = match i % 3 {
            0 => random_triple(&mut rng).render(),
            1 => format!("Where is {} {}?", ENTITIES.choose(&mut rng).unwrap(), RELATIONS.choose(&mut rng).unwrap()),
            _ => format!("{} and {}", ENTITIES.choose(&mut rng).unwrap(), ENTITIES.choose(&mut rng).unwrap()),
        };
        let k = 1 + i % 12;
        let got = kb.retrieve_similar(&query, k, &enc);
        assert_eq!(index.search(&enc.encode(&query), k), got);
        let want = exhaustive_scan(&stored, &query, k);
        assert_eq!(got.len(), want.len());
        for ((gt, gs), (wt, ws)) in got.iter().zip(&want) {
            assert_eq!(gt, wt, "query {query:?}");
            assert!((gs - ws).abs() < 1e-12);
        }
    }
}
