//! Chain-of-knowledge reasoning core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std`: triple normalization and knowledge-base indexing,
//! the hashed n-gram text encoder, the TransR-style embedding model with its
//! energy function and trainer, factuality/faithfulness verification,
//! prompt rendering, response parsing, and the iterative rethinking loop.
//! File formats, network backends and the command line live in the `cok`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod embed;
pub mod encoder;
pub mod eval;
pub mod kb;
pub mod llm;
pub mod parse;
pub mod prompt;
pub mod rethink;
pub mod text;
pub mod triple;
pub mod verify;

pub use embed::{EmbeddingModel, LinkResult, TrainConfig};
pub use encoder::{Embedding, HashedNgramEncoder, TextEncoder};
pub use kb::{AliasTable, Domain, KnowledgeBase};
pub use parse::{Answer, ReasoningChain, TaskType};
pub use triple::Triple;
pub use llm::{DecodingParams, LlmBackend};
pub use prompt::{Exemplar, PromptVariant, Query};
pub use rethink::{RethinkConfig, RethinkOutcome, Rethinker};
pub use verify::{ReliabilityReport, Verifier, VerifyConfig};
