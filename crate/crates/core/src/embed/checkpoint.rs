//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! "COKE" | u16 version | u8 endianness (1 = little) | u32 d | u32 |E| | u32 |R|
//! | u32 C_r per relation | entity names | relation names (u32 len + UTF-8 each)
//! | f64 entity_emb | f64 relation_emb | f64 prototypes | f64 projections | f64 alpha
//! | u32 CRC-32 of every preceding byte
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use super::{EmbeddingModel, Vocab};

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"COKE";
const LITTLE_ENDIAN: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
}

pub fn encode_checkpoint(model: &EmbeddingModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(LITTLE_ENDIAN);
    for n in [model.dim, model.entities.len(), model.relations.len()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for r in 0..model.relations.len() as u32 {
        out.extend_from_slice(&(model.cluster_count(r) as u32).to_le_bytes());
    }
    for name in model.entities.names().iter().chain(model.relations.names()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    let floats = model
        .entity_emb
        .iter()
        .chain(&model.relation_emb)
        .chain(model.prototypes.iter().flatten())
        .chain(model.projections.iter().flatten())
        .chain(core::iter::once(&model.alpha));
    for x in floats {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(CheckpointError::Corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        self.u32().map(|n| n as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let bytes = n.checked_mul(8).ok_or(CheckpointError::Corrupt("size overflow"))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn names(&mut self, n: usize) -> Result<Vocab, CheckpointError> {
        let mut v = Vocab::default();
        for _ in 0..n {
            let len = self.len()?;
            let s = core::str::from_utf8(self.take(len)?)
                .map_err(|_| CheckpointError::Corrupt("vocabulary entry is not UTF-8"))?;
            let before = v.len();
            v.intern(&String::from(s));
            if v.len() == before {
                return Err(CheckpointError::Corrupt("duplicate vocabulary entry"));
            }
        }
        Ok(v)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EmbeddingModel, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic"));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    if r.take(1)?[0] != LITTLE_ENDIAN {
        return Err(CheckpointError::Corrupt("only little-endian checkpoints are supported"));
    }
    if bytes.len() < 4 {
        return Err(CheckpointError::Corrupt("truncated"));
    }
    let (payload, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(CheckpointError::Corrupt("checksum mismatch"));
    }
    let mut r = Reader {
        buf: payload,
        pos: r.pos,
    };
    let dim = r.len()?;
    let n_entities = r.len()?;
    let n_relations = r.len()?;
    if dim == 0 {
        return Err(CheckpointError::Corrupt("zero dimension"));
    }
    let clusters: Vec<usize> = (0..n_relations).map(|_| r.len()).collect::<Result<_, _>>()?;
    if clusters.contains(&0) {
        return Err(CheckpointError::Corrupt("relation without prototypes"));
    }
    let entities = r.names(n_entities)?;
    let relations = r.names(n_relations)?;
    let entity_emb = r.f64s(n_entities * dim)?;
    let relation_emb = r.f64s(n_relations * dim)?;
    let prototypes = clusters
        .iter()
        .map(|&c| r.f64s(c * dim))
        .collect::<Result<_, _>>()?;
    let projections = (0..n_relations)
        .map(|_| r.f64s(dim * dim))
        .collect::<Result<_, _>>()?;
    let alpha = r.f64s(1)?[0];
    if r.pos != payload.len() {
        return Err(CheckpointError::Corrupt("trailing bytes"));
    }
    Ok(EmbeddingModel {
        dim,
        alpha,
        entities,
        relations,
        entity_emb,
        relation_emb,
        prototypes,
        projections,
    })
}
