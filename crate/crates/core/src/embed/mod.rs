//! TransR-style knowledge-graph embeddings with relation cluster prototypes.
//!
//! A triple `(s, r, o)` is scored by the energy
//! `||s·M_r + c − o·M_r||² + α·||c − r||²`, where `M_r` is the relation's
//! projection matrix and `c` is the relation prototype (cluster centroid of
//! projected offsets) that gives the lowest energy. Lower is more plausible.

mod checkpoint;
mod energy;
mod link;
mod train;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use energy::{energy, energy_and_grad, EnergyGrad};
pub use link::{implicit_score, link, ImplicitScore, LinkResult, Linker, DEFAULT_LINK_THRESHOLD, UNVERIFIABLE_SCORE};
pub use train::{hinge_gradient, hinge_loss, kmeans, train, Block, Gradient, IdTriple};

use crate::text::fold;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub clusters_per_relation: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 100,
            negatives_per_positive: 1,
            clusters_per_relation: 1,
            alpha: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be positive"));
        }
        if !positive(self.margin) {
            return Err(EmbedError::Config("margin must be positive"));
        }
        if !positive(self.learning_rate) {
            return Err(EmbedError::Config("learning_rate must be positive"));
        }
        if self.negatives_per_positive == 0 {
            return Err(EmbedError::Config("negatives_per_positive must be positive"));
        }
        if self.clusters_per_relation == 0 {
            return Err(EmbedError::Config("clusters_per_relation must be positive"));
        }
        if !positive(self.alpha) {
            return Err(EmbedError::Config("alpha must be positive"));
        }
        Ok(())
    }
}

/// Dense name ↔ index table keyed by folded surface.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    /// Returns the index of `name`, inserting it if new.
    pub fn intern(&mut self, name: &str) -> u32 {
        let key = fold(name);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(crate::text::normalize(name));
        self.index.insert(key, i);
        i
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(&fold(name)).copied()
    }

    pub fn name(&self, i: u32) -> &str {
        &self.names[i as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// `(folded key, index)` in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u32)> {
        self.index.iter().map(|(k, &i)| (k.as_str(), i))
    }
}

impl FromIterator<String> for Vocab {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut v = Vocab::default();
        for name in iter {
            v.intern(&name);
        }
        v
    }
}

/// Entity/relation embeddings, per-relation projections and prototypes.
/// All matrices are row-major `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub dim: usize,
    pub alpha: f64,
    pub entities: Vocab,
    pub relations: Vocab,
    /// `|E| × d`
    pub entity_emb: Vec<f64>,
    /// `|R| × d`
    pub relation_emb: Vec<f64>,
    /// Per relation, `C_r × d`.
    pub prototypes: Vec<Vec<f64>>,
    /// Per relation, `d × d`.
    pub projections: Vec<Vec<f64>>,
}

impl EmbeddingModel {
    pub fn entity(&self, i: u32) -> &[f64] {
        let d = self.dim;
        &self.entity_emb[i as usize * d..(i as usize + 1) * d]
    }

    pub fn relation(&self, r: u32) -> &[f64] {
        let d = self.dim;
        &self.relation_emb[r as usize * d..(r as usize + 1) * d]
    }

    pub fn cluster_count(&self, r: u32) -> usize {
        self.prototypes[r as usize].len() / self.dim
    }

    pub fn prototype(&self, r: u32, c: usize) -> &[f64] {
        let d = self.dim;
        &self.prototypes[r as usize][c * d..(c + 1) * d]
    }

    pub fn projection(&self, r: u32) -> &[f64] {
        &self.projections[r as usize]
    }

    /// Energy of an id triple under prototype `c` of its relation.
    pub fn energy_with(&self, t: IdTriple, c: usize) -> f64 {
        energy::energy_raw(
            self.entity(t.head),
            self.relation(t.relation),
            self.prototype(t.relation, c),
            self.entity(t.tail),
            self.projection(t.relation),
            self.alpha,
        )
    }

    /// Lowest energy over the relation's prototypes, with the winning index.
    /// Ties go to the lower prototype index.
    pub fn best_energy(&self, t: IdTriple) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for c in 0..self.cluster_count(t.relation) {
            let e = self.energy_with(t, c);
            if e < best.1 {
                best = (c, e);
            }
        }
        best
    }

    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::Entity(i) => self.entity(i),
            Block::Relation(r) => self.relation(r),
            Block::Prototype(r, c) => self.prototype(r, c as usize),
            Block::Projection(r) => self.projection(r),
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let d = self.dim;
        match b {
            Block::Entity(i) => &mut self.entity_emb[i as usize * d..(i as usize + 1) * d],
            Block::Relation(r) => &mut self.relation_emb[r as usize * d..(r as usize + 1) * d],
            Block::Prototype(r, c) => {
                &mut self.prototypes[r as usize][c as usize * d..(c as usize + 1) * d]
            }
            Block::Projection(r) => &mut self.projections[r as usize],
        }
    }

    /// Largest L2 norm over entity, relation and prototype vectors.
    pub fn max_vector_norm(&self) -> f64 {
        let d = self.dim;
        self.entity_emb
            .chunks(d)
            .chain(self.relation_emb.chunks(d))
            .chain(self.prototypes.iter().flat_map(|p| p.chunks(d)))
            .map(norm)
            .fold(0.0, f64::max)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Rescales `v` onto the unit ball if it lies outside.
pub(crate) fn clip_to_unit_ball(v: &mut [f64]) {
    let n = norm(v);
    if n > 1.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
