//! Files, LLM backends, dataset runs and reports for chain-of-knowledge
//! reasoning, on top of `cok-core`.

pub mod config;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod exemplars;
pub mod kb_io;
pub mod llm;
pub mod report;
pub mod run;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
