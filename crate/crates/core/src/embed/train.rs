use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::energy::energy_and_grad;
use super::{clip_to_unit_ball, EmbedError, EmbeddingModel, TrainConfig, Vocab};
use crate::kb::KnowledgeBase;

const LLOYD_ITERATIONS: usize = 10;
const MAX_CORRUPTION_ATTEMPTS: usize = 64;

/// A triple expressed as vocabulary indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IdTriple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

/// One trainable parameter block of an [`EmbeddingModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Block {
    Entity(u32),
    Relation(u32),
    Prototype(u32, u32),
    Projection(u32),
}

/// Sparse gradient: only the blocks a loss term touches.
pub type Gradient = BTreeMap<Block, Vec<f64>>;

fn accumulate(grad: &mut Gradient, block: Block, g: &[f64], sign: f64) {
    let slot = grad.entry(block).or_insert_with(|| vec![0.0; g.len()]);
    for (a, b) in slot.iter_mut().zip(g) {
        *a += sign * b;
    }
}

fn add_energy_grad(grad: &mut Gradient, model: &EmbeddingModel, t: IdTriple, c: usize, sign: f64) {
    let (_, g) = energy_and_grad(
        model.entity(t.head),
        model.relation(t.relation),
        model.prototype(t.relation, c),
        model.entity(t.tail),
        model.projection(t.relation),
        model.alpha,
    );
    accumulate(grad, Block::Entity(t.head), &g.s, sign);
    accumulate(grad, Block::Entity(t.tail), &g.o, sign);
    accumulate(grad, Block::Relation(t.relation), &g.r, sign);
    accumulate(grad, Block::Prototype(t.relation, c as u32), &g.proto, sign);
    accumulate(grad, Block::Projection(t.relation), &g.m, sign);
}

/// `max(0, margin + E(pos) − E(neg))`, both scored with prototype `c` of the
/// shared relation.
pub fn hinge_loss(model: &EmbeddingModel, pos: IdTriple, neg: IdTriple, c: usize, margin: f64) -> f64 {
    (margin + model.energy_with(pos, c) - model.energy_with(neg, c)).max(0.0)
}

/// Analytic gradient of [`hinge_loss`]; `None` when the hinge is inactive.
pub fn hinge_gradient(
    model: &EmbeddingModel,
    pos: IdTriple,
    neg: IdTriple,
    c: usize,
    margin: f64,
) -> Option<Gradient> {
    if hinge_loss(model, pos, neg, c, margin) <= 0.0 {
        return None;
    }
    let mut grad = Gradient::new();
    add_energy_grad(&mut grad, model, pos, c, 1.0);
    add_energy_grad(&mut grad, model, neg, c, -1.0);
    Some(grad)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded Lloyd k-means over `points` (each of length `dim`). Returns the
/// flat `k' × dim` centroids with `k' = min(k, n)` and each point's cluster.
/// An emptied cluster keeps its previous centroid.
pub fn kmeans<R: Rng>(
    points: &[Vec<f64>],
    dim: usize,
    k: usize,
    iterations: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<usize>) {
    let n = points.len();
    let k = k.min(n).max(1);
    if n == 0 {
        return (vec![0.0; dim], Vec::new());
    }
    let mut centroids: Vec<f64> = rand::seq::index::sample(rng, n, k)
        .into_iter()
        .flat_map(|i| points[i].iter().copied())
        .collect();
    let mut assign = vec![0usize; n];
    let nearest = |centroids: &[f64], p: &[f64]| {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in centroids.chunks(dim).enumerate() {
            let dist = sq_dist(p, centroid);
            if dist < best.1 {
                best = (c, dist);
            }
        }
        best.0
    };
    for _ in 0..iterations {
        for (a, p) in assign.iter_mut().zip(points) {
            *a = nearest(&centroids, p);
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    for (a, p) in assign.iter_mut().zip(points) {
        *a = nearest(&centroids, p);
    }
    (centroids, assign)
}

/// Projected offset `o·M − s·M`.
fn offset(model: &EmbeddingModel, t: IdTriple) -> Vec<f64> {
    let d = model.dim;
    let (s, o, m) = (model.entity(t.head), model.entity(t.tail), model.projection(t.relation));
    let mut out = vec![0.0; d];
    for i in 0..d {
        let diff = o[i] - s[i];
        for j in 0..d {
            out[j] += diff * m[i * d + j];
        }
    }
    out
}

/// Recomputes every relation's prototypes and returns the per-triple cluster
/// assignment (aligned with `triples`).
fn refresh_prototypes<R: Rng>(
    model: &mut EmbeddingModel,
    triples: &[IdTriple],
    by_relation: &[Vec<usize>],
    clusters: usize,
    rng: &mut R,
) -> Vec<usize> {
    let d = model.dim;
    let mut assignment = vec![0usize; triples.len()];
    for (r, members) in by_relation.iter().enumerate() {
        let points: Vec<Vec<f64>> = members.iter().map(|&i| offset(model, triples[i])).collect();
        let (mut centroids, assign) = kmeans(&points, d, clusters, LLOYD_ITERATIONS, rng);
        for c in centroids.chunks_mut(d) {
            clip_to_unit_ball(c);
        }
        model.prototypes[r] = centroids;
        for (&i, a) in members.iter().zip(assign) {
            assignment[i] = a;
        }
    }
    assignment
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let bound = 6.0 / libm::sqrt(d as f64);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-bound..=bound)).collect();
    let n = super::norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn corrupt<R: Rng>(
    pos: IdTriple,
    known: &BTreeSet<IdTriple>,
    entity_count: u32,
    rng: &mut R,
) -> Option<IdTriple> {
    for _ in 0..MAX_CORRUPTION_ATTEMPTS {
        let e = rng.random_range(0..entity_count);
        let neg = if rng.random_bool(0.5) {
            IdTriple { head: e, ..pos }
        } else {
            IdTriple { tail: e, ..pos }
        };
        if !known.contains(&neg) {
            return Some(neg);
        }
    }
    None
}

fn apply(model: &mut EmbeddingModel, grad: &Gradient, lr: f64) {
    for (&block, g) in grad {
        let params = model.block_mut(block);
        for (p, g) in params.iter_mut().zip(g) {
            *p -= lr * g;
        }
        if !matches!(block, Block::Projection(_)) {
            clip_to_unit_ball(params);
        }
    }
}

/// Margin-ranking SGD over every KB triple. Bit-for-bit deterministic for a
/// given `(kb, config)`.
pub fn train(kb: &KnowledgeBase, config: &TrainConfig) -> Result<EmbeddingModel, EmbedError> {
    config.validate()?;
    if kb.is_empty() {
        return Err(EmbedError::Config("knowledge base is empty"));
    }
    let d = config.dim;
    let mut entities = Vocab::default();
    let mut relations = Vocab::default();
    let triples: Vec<IdTriple> = kb
        .triples()
        .iter()
        .map(|t| IdTriple {
            head: entities.intern(&t.subject),
            relation: relations.intern(&t.relation),
            tail: entities.intern(&t.object),
        })
        .collect();
    let known: BTreeSet<IdTriple> = triples.iter().copied().collect();
    let mut by_relation = vec![Vec::new(); relations.len()];
    for (i, t) in triples.iter().enumerate() {
        by_relation[t.relation as usize].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let entity_emb = (0..entities.len()).flat_map(|_| random_unit(&mut rng, d)).collect();
    let relation_emb = (0..relations.len()).flat_map(|_| random_unit(&mut rng, d)).collect();
    let mut identity = vec![0.0; d * d];
    for i in 0..d {
        identity[i * d + i] = 1.0;
    }
    let mut model = EmbeddingModel {
        dim: d,
        alpha: config.alpha,
        entity_emb,
        relation_emb,
        prototypes: vec![Vec::new(); relations.len()],
        projections: vec![identity; relations.len()],
        entities,
        relations,
    };
    let mut assignment = refresh_prototypes(
        &mut model,
        &triples,
        &by_relation,
        config.clusters_per_relation,
        &mut rng,
    );

    let entity_count = model.entities.len() as u32;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let pos = triples[i];
            let c = assignment[i];
            for _ in 0..config.negatives_per_positive {
                let Some(neg) = corrupt(pos, &known, entity_count, &mut rng) else {
                    continue;
                };
                if let Some(grad) = hinge_gradient(&model, pos, neg, c, config.margin) {
                    apply(&mut model, &grad, config.learning_rate);
                }
            }
        }
        assignment = refresh_prototypes(
            &mut model,
            &triples,
            &by_relation,
            config.clusters_per_relation,
            &mut rng,
        );
        debug_assert!(model.max_vector_norm() <= 1.0 + 1e-6);
    }
    Ok(model)
}
