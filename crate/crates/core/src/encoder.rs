//! Text encoders used for faithfulness, linking and triple retrieval.
//!
//! The default [`HashedNgramEncoder`] is a signed feature-hashing encoder
//! over word unigrams and padded character trigrams. It has no model
//! weights, so every test and desk-scale run is reproducible.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;

use crate::text::fold;

/// A unit-norm vector (or the zero vector for text with no features).
#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Dense(Vec<f64>),
    /// Sorted by bucket, no duplicate buckets.
    Sparse { dim: usize, entries: Vec<(u32, f64)> },
}

impl Embedding {
    pub fn dim(&self) -> usize {
        match self {
            Embedding::Dense(v) => v.len(),
            Embedding::Sparse { dim, .. } => *dim,
        }
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        match (self, other) {
            (Embedding::Dense(a), Embedding::Dense(b)) => {
                a.iter().zip(b).map(|(x, y)| x * y).sum()
            }
            (Embedding::Sparse { entries, .. }, Embedding::Dense(d))
            | (Embedding::Dense(d), Embedding::Sparse { entries, .. }) => entries
                .iter()
                .filter_map(|&(i, w)| d.get(i as usize).map(|x| x * w))
                .sum(),
            (Embedding::Sparse { entries: a, .. }, Embedding::Sparse { entries: b, .. }) => {
                let (mut i, mut j, mut acc) = (0, 0, 0.0);
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        core::cmp::Ordering::Less => i += 1,
                        core::cmp::Ordering::Greater => j += 1,
                        core::cmp::Ordering::Equal => {
                            acc += a[i].1 * b[j].1;
                            i += 1;
                            j += 1;
                        }
                    }
                }
                acc
            }
        }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Embedding::Dense(v) => v.clone(),
            Embedding::Sparse { dim, entries } => {
                let mut v = vec![0.0; *dim];
                for &(i, w) in entries {
                    v[i as usize] = w;
                }
                v
            }
        }
    }

    /// Scales to unit length; the zero vector is left as is.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            match &mut self {
                Embedding::Dense(v) => v.iter_mut().for_each(|x| *x /= n),
                Embedding::Sparse { entries, .. } => {
                    entries.iter_mut().for_each(|(_, w)| *w /= n)
                }
            }
        }
        self
    }
}

/// Maps text to a unit-norm vector of fixed dimension.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Embedding;

    /// Cosine similarity of two texts (inner product of unit vectors),
    /// clamped to `[-1, 1]`.
    fn similarity(&self, a: &str, b: &str) -> f64 {
        self.encode(a).dot(&self.encode(b)).clamp(-1.0, 1.0)
    }
}

impl<E: TextEncoder + ?Sized> TextEncoder for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, text: &str) -> Embedding {
        (**self).encode(text)
    }
}

impl<E: TextEncoder + ?Sized> TextEncoder for alloc::boxed::Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, text: &str) -> Embedding {
        (**self).encode(text)
    }
}

impl<E: TextEncoder + ?Sized> TextEncoder for alloc::sync::Arc<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, text: &str) -> Embedding {
        (**self).encode(text)
    }
}

pub const DEFAULT_BUCKETS: usize = 1 << 15;

/// Signed hashing of word unigrams and `<word>`-padded character trigrams
/// into [`DEFAULT_BUCKETS`] buckets, L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashedNgramEncoder;

const UNIGRAM_TAG: u8 = 0x01;
const TRIGRAM_TAG: u8 = 0x03;

fn feature_hash(tag: u8, feature: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u8(tag);
    h.write(feature.as_bytes());
    h.finish()
}

/// Lowercased alphanumeric runs.
pub(crate) fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
}

impl HashedNgramEncoder {
    fn features(text: &str) -> Vec<u64> {
        let folded = fold(text);
        let mut out = Vec::new();
        let mut padded = String::new();
        for word in words(&folded) {
            out.push(feature_hash(UNIGRAM_TAG, word));
            padded.clear();
            padded.push('<');
            padded.push_str(word);
            padded.push('>');
            let chars: Vec<(usize, char)> = padded.char_indices().collect();
            for w in chars.windows(3) {
                let start = w[0].0;
                let end = w[2].0 + w[2].1.len_utf8();
                out.push(feature_hash(TRIGRAM_TAG, &padded[start..end]));
            }
        }
        out
    }
}

impl TextEncoder for HashedNgramEncoder {
    fn dim(&self) -> usize {
        DEFAULT_BUCKETS
    }

    fn encode(&self, text: &str) -> Embedding {
        let mut entries: Vec<(u32, f64)> = Self::features(text)
            .into_iter()
            .map(|h| {
                let bucket = (h % DEFAULT_BUCKETS as u64) as u32;
                let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
                (bucket, sign)
            })
            .collect();
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (b, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == b => last.1 += w,
                _ => merged.push((b, w)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        Embedding::Sparse {
            dim: DEFAULT_BUCKETS,
            entries: merged,
        }
        .normalized()
    }
}
