//! LLM backends: HTTP chat completions, a scripted mock and record/replay.

mod http;
mod mock;
mod ratelimit;
mod replay;

pub use http::{HttpBackend, HttpConfig, RetryPolicy, API_KEY_ENV, DEFAULT_TIMEOUT_S};
pub use mock::ScriptedBackend;
pub use ratelimit::RateLimiter;
pub use replay::{decode_log, read_log, RecordingBackend, ReplayBackend, ReplayRecord, REPLAY_VERSION};

use cok_core::llm::LlmBackend;

use crate::config::BackendSpec;
use crate::error::Result;

/// Opens the backend a run manifest names.
pub fn open_backend(spec: &BackendSpec) -> Result<Box<dyn LlmBackend>> {
    Ok(match spec {
        BackendSpec::Http { config } => Box::new(HttpBackend::new(HttpConfig::from_path(config)?)),
        BackendSpec::Script { path } => Box::new(ScriptedBackend::from_script(path)?),
        BackendSpec::Replay { path } => Box::new(ReplayBackend::open(path)?),
        BackendSpec::Record { config, path } => Box::new(RecordingBackend::create(
            HttpBackend::new(HttpConfig::from_path(config)?),
            path,
        )?),
    })
}
